"""Exception hierarchy for isofuse.

Every error raised by the public API derives from :class:`IsofuseError`,
so callers can catch one base class. The CLI maps a few of these onto
documented exit codes (see ``isofuse.cli``).
"""


class IsofuseError(Exception):
    """Base class for all isofuse errors."""


# --- design / poset construction ------------------------------------------

class DuplicateDesignPoint(IsofuseError):
    """Two design points share identical coordinates."""


class DimensionMismatch(IsofuseError):
    """Design points do not share a common coordinate dimension."""


# --- isotonic solvers -------------------------------------------------------

class NotAChain(IsofuseError):
    """The poset handed to the chain solver is not totally ordered."""


class Infeasible(IsofuseError):
    """The constraint set admits no solution (reserved; equality merges
    alone can never trigger this)."""


class NoActiveNodes(IsofuseError):
    """The problem contains no node with positive weight."""


class BelowObservedRange(IsofuseError):
    """The query point dominates no fitted design point."""


# --- likelihood models ------------------------------------------------------

class MissingNuisance(IsofuseError):
    """A Gaussian variance is required but neither supplied nor estimable."""


class DegenerateLikelihood(IsofuseError):
    """A binomial fit of 0 or 1 contradicts the observed counts."""


class InsufficientData(IsofuseError):
    """Too few observations for the requested estimate."""


# --- similarity testing -----------------------------------------------------

class NullBeatsAlternative(IsofuseError):
    """The constrained fit scored better than the unconstrained one beyond
    numerical tolerance; this indicates a solver defect."""


class PointNotTestable(IsofuseError):
    """Neither data set observes the requested design point."""


class DomainError(IsofuseError):
    """A probability or quantile argument lies outside its domain."""


# --- joint estimation -------------------------------------------------------

class IncompleteValues(IsofuseError):
    """A value is missing on an active index of the joint problem."""


class DescentViolation(IsofuseError):
    """The objective increased during a coordinate update beyond tolerance;
    this indicates a solver defect."""


# --- simulation lab ---------------------------------------------------------

class UnknownStudy(IsofuseError):
    """The study identifier is not one of the preconfigured studies."""


class NoEvalPoints(IsofuseError):
    """An RMSE evaluation was requested on an empty point set."""


class DegenerateBaseline(IsofuseError):
    """The no-borrowing baseline has zero RMSE, so the ratio R is undefined."""


# --- ingestion --------------------------------------------------------------

class ParseError(IsofuseError):
    """A CSV row failed to parse; the message carries the line number."""


class RangeError(IsofuseError):
    """A binomial response lies outside [0, trials]."""


class EmptyGroup(IsofuseError):
    """A row carries an empty group label."""
