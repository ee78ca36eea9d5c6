"""Exception hierarchy shared by every module of the package."""


class WaveWhittleError(Exception):
    """Base class for all package errors."""

    code = "error"

    def to_record(self) -> dict:
        return {"error": self.code, "message": str(self)}


def _make(name: str, doc: str, base: type = WaveWhittleError) -> type:
    return type(name, (base,), {"__doc__": doc, "code": name})


UnsupportedOrder = _make("UnsupportedOrder", "Wavelet order outside the supported range.")
SeriesTooShort = _make("SeriesTooShort", "Too few samples for the requested scales.")
NonFiniteInput = _make("NonFiniteInput", "Input contains NaN or infinite values.")
IndexOutOfRange = _make("IndexOutOfRange", "Coefficient index is not an interior coefficient.")
DomainError = _make("DomainError", "Argument outside the domain where a kernel is defined.")
ConvergenceError = _make("ConvergenceError", "Quadrature or series did not reach the tolerance.")
SingularityError = _make("SingularityError", "Evaluation exactly at a singular point.")
DivergentSeries = _make("DivergentSeries", "Infinite scale sum does not contract.")
DegenerateDelta = _make("DegenerateDelta", "Scale gap Delta=0 makes the scale variance vanish.")
EmptyScale = _make("EmptyScale", "A retained scale has no coefficients.")
DegenerateVariance = _make("DegenerateVariance", "A variance that must be positive is not.")
NonPDMatrix = _make("NonPDMatrix", "Matrix is not positive definite.")
OptimFailed = _make("OptimFailed", "Optimizer did not converge.")
CosineSingularity = _make("CosineSingularity", "Phase factor cos(pi(d_a-d_b)/2) vanishes.")
SingularMatrix = _make("SingularMatrix", "Matrix cannot be inverted.")
ResourceLimit = _make("ResourceLimit", "Requested work exceeds the configured budget.")
EmptyFile = _make("EmptyFile", "Input file has no content.")


class ParseError(WaveWhittleError):
    """Malformed CSV content, located by 1-based row and column."""

    code = "ParseError"

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column

    def to_record(self) -> dict:
        rec = super().to_record()
        rec.update(row=self.row, column=self.column)
        return rec
