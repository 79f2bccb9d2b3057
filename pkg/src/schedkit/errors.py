"""Exception hierarchy shared across the framework."""


class SchedkitError(Exception):
    """Base class for every framework error."""


class IllegalTransition(SchedkitError):
    pass


class ClockRegression(SchedkitError):
    def __init__(self, last_time: float, event_time: float):
        self.last_time = last_time
        self.event_time = event_time
        super().__init__(
            f"event at t={event_time} published after an event at t={last_time}"
        )


class AlreadyRunning(SchedkitError):
    pass


class NotRunning(SchedkitError):
    pass


class NotAttached(SchedkitError):
    pass


class DuplicateTaskId(SchedkitError):
    pass


class StaleAssignment(SchedkitError):
    pass


class UnknownResource(SchedkitError):
    pass


class UnknownTask(SchedkitError):
    pass


class NotDisconnected(SchedkitError):
    pass


class UnknownPool(SchedkitError):
    pass


class LocalPoolFixed(SchedkitError):
    pass


class NotProvisioned(SchedkitError):
    pass


class NotIdle(SchedkitError):
    pass


class ConfigInvalid(SchedkitError):
    """Raised with one diagnostic per offending config field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class AlreadyDisconnected(SchedkitError):
    pass
