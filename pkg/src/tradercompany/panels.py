"""Price and return panels: the data model shared by every predictor.

Panels are stock-major: ``prices[i, t]`` is the price of stock ``i`` at
``timestamps[t]`` and ``returns[i, t]`` the log return of stock ``i`` over
the period ending at ``timestamps[t]``.  Timestamps are opaque ordered
labels (ISO-8601 strings in CSV files); their ordering is string ordering.
All panels are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HistoryError, PanelError
from .validation import readonly_matrix


def _check_timestamps(timestamps) -> tuple[str, ...]:
    ts = tuple(str(t) for t in timestamps)
    for k in range(1, len(ts)):
        if ts[k] == ts[k - 1]:
            raise PanelError(f"duplicate timestamp {ts[k]!r} at position {k}")
        if ts[k] < ts[k - 1]:
            raise PanelError(
                f"timestamps not strictly increasing at position {k}: "
                f"{ts[k - 1]!r} followed by {ts[k]!r}"
            )
    return ts


@dataclass(frozen=True)
class PricePanel:
    """Strictly positive prices for ``symbols`` over ``timestamps``."""

    symbols: tuple[str, ...]
    timestamps: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        object.__setattr__(self, "timestamps", _check_timestamps(self.timestamps))
        prices = readonly_matrix("prices", self.prices)
        if prices.shape != (len(self.symbols), len(self.timestamps)):
            raise PanelError(
                f"prices shape {prices.shape} does not match "
                f"{len(self.symbols)} symbols x {len(self.timestamps)} timestamps"
            )
        nonpos = np.argwhere(~(prices > 0))
        if nonpos.size:
            i, t = nonpos[0]
            raise PanelError(
                f"non-positive price {prices[i, t]} for symbol "
                f"{self.symbols[i]!r} at timestamp {self.timestamps[t]!r}"
            )
        object.__setattr__(self, "prices", prices)

    @property
    def num_stocks(self) -> int:
        return len(self.symbols)

    @property
    def num_periods(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class ReturnPanel:
    """Finite log returns for ``symbols`` over ``timestamps``."""

    symbols: tuple[str, ...]
    timestamps: tuple[str, ...]
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(str(s) for s in self.symbols))
        object.__setattr__(self, "timestamps", _check_timestamps(self.timestamps))
        returns = readonly_matrix("returns", self.returns)
        if returns.shape != (len(self.symbols), len(self.timestamps)):
            raise PanelError(
                f"returns shape {returns.shape} does not match "
                f"{len(self.symbols)} symbols x {len(self.timestamps)} timestamps"
            )
        object.__setattr__(self, "returns", returns)

    @property
    def num_stocks(self) -> int:
        return len(self.symbols)

    @property
    def num_periods(self) -> int:
        return len(self.timestamps)

    def symbol_index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise PanelError(f"unknown symbol {symbol!r}") from None


@dataclass(frozen=True)
class WindowSpec:
    """Training window length ``w`` and execution lag ``l``, both in periods."""

    window_length: int
    execution_lag: int = 1

    def __post_init__(self):
        if self.window_length < 1:
            raise ConfigError("window_length must be >= 1")
        if self.execution_lag < 1:
            raise ConfigError("execution_lag must be >= 1")


def compute_log_returns(prices: PricePanel) -> ReturnPanel:
    """Convert a price panel to log returns.

    ``returns[i, t] = ln(prices[i, t+1] / prices[i, t])`` so the output has
    one fewer time point; its timestamp ``t`` is the end of the period.
    """
    if prices.num_periods < 2:
        raise PanelError("need at least two time points to compute returns")
    logp = np.log(prices.prices)
    return ReturnPanel(
        symbols=prices.symbols,
        timestamps=prices.timestamps[1:],
        returns=logp[:, 1:] - logp[:, :-1],
    )


def slice_window(panel: ReturnPanel, t: int, spec: WindowSpec) -> ReturnPanel:
    """Sub-panel over time indices ``[t - l - w, t - l]``, both ends included.

    This is the training view available when predicting at ``t`` under an
    execution lag of ``l``: the most recent usable observation is ``t - l``.
    """
    lo = t - spec.execution_lag - spec.window_length
    hi = t - spec.execution_lag
    if lo < 0:
        raise HistoryError(
            f"t={t} is too early for window {spec.window_length} and lag "
            f"{spec.execution_lag}; earliest admissible t is "
            f"{spec.execution_lag + spec.window_length}"
        )
    if hi >= panel.num_periods:
        raise HistoryError(
            f"t={t} reaches past the end of the panel ({panel.num_periods} periods)"
        )
    return ReturnPanel(
        symbols=panel.symbols,
        timestamps=panel.timestamps[lo : hi + 1],
        returns=panel.returns[:, lo : hi + 1],
    )


def sub_panel(panel: ReturnPanel, start: int, stop: int) -> ReturnPanel:
    """Sub-panel over the half-open time index range ``[start, stop)``."""
    if not 0 <= start < stop <= panel.num_periods:
        raise HistoryError(
            f"invalid sub-panel range [{start}, {stop}) for a panel with "
            f"{panel.num_periods} periods"
        )
    return ReturnPanel(
        symbols=panel.symbols,
        timestamps=panel.timestamps[start:stop],
        returns=panel.returns[:, start:stop],
    )


@dataclass(frozen=True)
class CsvFormat:
    """Layout of panel CSV files: a ``timestamp`` column then one column per symbol."""

    timestamp_column: str = "timestamp"
    delimiter: str = ","


def _read_panel_csv(path, fmt: CsvFormat):
    with open(path, newline="", encoding="utf8") as fh:
        reader = csv.reader(fh, delimiter=fmt.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelError(f"{path}: empty file") from None
        if not header or header[0].strip() != fmt.timestamp_column:
            raise PanelError(
                f"{path}: first header column must be {fmt.timestamp_column!r}, "
                f"got {header[0]!r}" if header else f"{path}: empty header"
            )
        symbols = [c.strip() for c in header[1:]]
        if not symbols:
            raise PanelError(f"{path}: no symbol columns in header")
        timestamps: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PanelError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            timestamps.append(row[0].strip())
            values = []
            for col, cell in zip(symbols, row[1:]):
                cell = cell.strip()
                if cell == "":
                    raise PanelError(
                        f"{path}: missing value at row {lineno}, column {col!r}"
                    )
                try:
                    values.append(float(cell))
                except ValueError:
                    raise PanelError(
                        f"{path}: cannot parse {cell!r} at row {lineno}, column {col!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise PanelError(f"{path}: no data rows")
    for k in range(1, len(timestamps)):
        if timestamps[k] == timestamps[k - 1]:
            raise PanelError(f"{path}: duplicate timestamp {timestamps[k]!r} at row {k + 2}")
        if timestamps[k] < timestamps[k - 1]:
            raise PanelError(
                f"{path}: timestamps out of order at row {k + 2}: "
                f"{timestamps[k]!r} follows {timestamps[k - 1]!r}"
            )
    matrix = np.array(rows, dtype=float).T  # stock-major
    return symbols, timestamps, matrix


def load_price_csv(path, fmt: CsvFormat = CsvFormat()) -> PricePanel:
    """Load a price panel, validating layout, ordering, and positivity."""
    symbols, timestamps, matrix = _read_panel_csv(path, fmt)
    return PricePanel(symbols=symbols, timestamps=timestamps, prices=matrix)


def load_return_csv(path, fmt: CsvFormat = CsvFormat()) -> ReturnPanel:
    """Load a panel of log returns laid out like a price CSV."""
    symbols, timestamps, matrix = _read_panel_csv(path, fmt)
    return ReturnPanel(symbols=symbols, timestamps=timestamps, returns=matrix)


def _write_panel_csv(path, fmt, symbols, timestamps, matrix):
    with open(path, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh, delimiter=fmt.delimiter)
        writer.writerow([fmt.timestamp_column, *symbols])
        for t, stamp in enumerate(timestamps):
            writer.writerow([stamp] + [repr(float(v)) for v in matrix[:, t]])


def write_price_csv(panel: PricePanel, path, fmt: CsvFormat = CsvFormat()) -> None:
    _write_panel_csv(path, fmt, panel.symbols, panel.timestamps, panel.prices)


def write_return_csv(panel: ReturnPanel, path, fmt: CsvFormat = CsvFormat()) -> None:
    _write_panel_csv(path, fmt, panel.symbols, panel.timestamps, panel.returns)
