"""Exception types shared across the toolkit.

Every error carries its identifying pieces as attributes so callers (and the
CLI's structured error output) can report them without parsing messages.
"""


class AdeQvaetError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AdeQvaetError):
    """Run configuration is invalid or incomplete."""


# --- dataset ingestion ---------------------------------------------------


class MissingColumn(AdeQvaetError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"column {name!r} not found in CSV header")


class UnparseableCell(AdeQvaetError):
    def __init__(self, row: int, col: str, value: str = ""):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"cell at data row {row}, column {col!r} is not numeric: {value!r}")


class UnknownLabelToken(AdeQvaetError):
    def __init__(self, row: int, token: str = ""):
        self.row = row
        self.token = token
        super().__init__(f"label at data row {row} is neither positive nor negative token: {token!r}")


class SingleClassDataset(AdeQvaetError):
    """Stratified splitting needs at least one row of each class."""


# --- preprocessing -------------------------------------------------------


class AllMissingColumn(AdeQvaetError):
    def __init__(self, col: str):
        self.col = col
        super().__init__(f"column {col!r} has no observed values to impute from")


class TooFewRows(AdeQvaetError):
    """Operation needs more rows than the table has (quartiles need >= 4)."""


class MinorityTooSmall(AdeQvaetError):
    """Oversampling needs at least two minority rows to interpolate between."""


class DimensionMismatch(AdeQvaetError):
    """Column/dimension counts of two operands disagree."""


# --- autodiff core -------------------------------------------------------


class ShapeMismatch(AdeQvaetError):
    def __init__(self, op: str, got, expected):
        self.op = op
        self.got = got
        self.expected = expected
        super().__init__(f"{op}: got shape {got}, expected {expected}")


class NonScalarLoss(AdeQvaetError):
    """backward() requires a 1x1 loss node."""


# --- quantum simulation --------------------------------------------------


class QubitOutOfRange(AdeQvaetError):
    def __init__(self, qubit: int, n_qubits: int):
        self.qubit = qubit
        self.n_qubits = n_qubits
        super().__init__(f"qubit {qubit} out of range for {n_qubits}-qubit register")


# --- optimizer -----------------------------------------------------------


class PopulationTooSmall(AdeQvaetError):
    """Difference mutation needs three distinct non-target candidates."""


class CandidateEvaluationFailed(AdeQvaetError):
    def __init__(self, candidate_id: int, cause: BaseException):
        self.candidate_id = candidate_id
        self.cause = cause
        super().__init__(f"objective failed for candidate {candidate_id}: {cause}")


# --- evaluation ----------------------------------------------------------


class LengthMismatch(AdeQvaetError):
    """Prediction and label vectors differ in length."""


class EmptyMatrix(AdeQvaetError):
    """Metrics over zero evaluated rows are undefined."""


class EmptyReport(AdeQvaetError):
    """Rendering needs at least one metrics row."""


class UnknownFormat(AdeQvaetError):
    def __init__(self, fmt: str):
        self.fmt = fmt
        super().__init__(f"unknown report format {fmt!r} (expected csv, markdown, or json)")
