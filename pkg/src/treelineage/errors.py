"""Exception hierarchy for treelineage.

Every failure mode of the public API raises a subclass of TreelineageError,
so callers can catch one base class at pipeline boundaries (the CLI does).
"""


class TreelineageError(Exception):
    pass


# --- instances ---------------------------------------------------------


class InvalidSignature(TreelineageError):
    pass


class DuplicateFact(TreelineageError):
    pass


class UnknownRelation(TreelineageError):
    pass


class ArityMismatch(TreelineageError):
    pass


class GraphAxiomViolation(TreelineageError):
    pass


class InvalidParams(TreelineageError):
    pass


class MissingProbability(TreelineageError):
    pass


# --- decompositions ----------------------------------------------------


class InvalidDecomposition(TreelineageError):
    pass


class FactNotCovered(InvalidDecomposition):
    def __init__(self, fact_index):
        super().__init__(f"fact #{fact_index} is not covered by any bag")
        self.fact_index = fact_index


class DisconnectedOccurrence(InvalidDecomposition):
    def __init__(self, element):
        super().__init__(f"bags containing {element!r} do not form a connected subtree")
        self.element = element


class WidthMismatch(InvalidDecomposition):
    def __init__(self, declared, actual):
        super().__init__(f"declared width {declared} but bags give width {actual}")
        self.declared = declared
        self.actual = actual


class WidthOverflow(TreelineageError):
    pass


class NotAPath(TreelineageError):
    pass


# --- queries -----------------------------------------------------------


class QuerySyntaxError(TreelineageError):
    pass


class FreeDisequalityVariable(QuerySyntaxError):
    pass


class ConstantNotAllowed(QuerySyntaxError):
    pass


class InstanceTooLarge(TreelineageError):
    pass


class UnsupportedArity(TreelineageError):
    pass


class UnrankableQuery(TreelineageError):
    pass


class InvalidExpression(TreelineageError):
    pass


class NotHierarchical(InvalidExpression):
    def __init__(self, var, atom):
        super().__init__(f"variable {var!r} does not occur in atom {atom} inside its scope")
        self.var = var
        self.atom = atom


class OrderInconsistency(InvalidExpression):
    def __init__(self, relation, positions):
        super().__init__(f"positions {positions} of relation {relation!r} admit no consistent order")
        self.relation = relation
        self.positions = positions


# --- automata ----------------------------------------------------------


class WidthTooLarge(TreelineageError):
    """State-space or bag-size guard exceeded; raised instead of truncating."""


class StateExplosion(TreelineageError):
    pass


class LabelNotInAlphabet(TreelineageError):
    pass


class AlphabetMismatch(TreelineageError):
    pass


class IncompleteTransition(TreelineageError):
    pass


# --- circuits ----------------------------------------------------------


class MissingInput(TreelineageError):
    pass


class TooManyInputsForDeterminismCheck(TreelineageError):
    pass


class NotDDnnf(TreelineageError):
    pass


# --- intricacy ---------------------------------------------------------


class NotConnected(TreelineageError):
    pass


class QueryTooLarge(TreelineageError):
    pass


class NoBinaryRelation(TreelineageError):
    pass


class QueryIsIntricate(TreelineageError):
    pass


# --- unfoldings --------------------------------------------------------


class InstanceNotRanked(TreelineageError):
    pass


class MissingRelationOrder(TreelineageError):
    pass


class LineageMismatch(TreelineageError):
    def __init__(self, valuation):
        super().__init__(f"lineages differ on valuation {sorted(valuation)}")
        self.valuation = valuation
