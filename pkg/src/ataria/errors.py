"""Exception hierarchy shared by the model, oracle and learning layers."""


class DTASError(Exception):
    """Base class for every error raised by this package."""


# core model: rule preconditions
class RuleViolation(DTASError):
    pass


class NoResponsibleAgent(RuleViolation):
    pass


class NotInNeighbourhood(RuleViolation):
    pass


class TaskNotHeld(RuleViolation):
    pass


class AlreadyAllocated(RuleViolation):
    pass


class NotCapable(RuleViolation):
    pass


class EmptyKnowledge(RuleViolation):
    pass


class InNeighbourhood(RuleViolation):
    pass


class NotKnown(RuleViolation):
    pass


class NotNeighbour(RuleViolation):
    pass


class NeighbourhoodFull(RuleViolation):
    pass


# quality oracle
class Incapable(DTASError):
    pass


class UnallocatedTask(DTASError):
    pass


class BudgetExceeded(DTASError):
    pass


class NonAllocable(DTASError):
    pass


# learning / impact
class ParameterOutOfRange(DTASError, ValueError):
    pass


class ZeroSum(DTASError, ValueError):
    pass


class NonPositiveTemperature(DTASError, ValueError):
    pass


class InsufficientHistory(DTASError):
    pass


class InvalidSizes(DTASError, ValueError):
    pass


# algorithms / harness
class NoAvailableAction(DTASError):
    pass


class StepBudgetExhausted(DTASError):
    pass


class InfeasibleConfig(DTASError, ValueError):
    pass
