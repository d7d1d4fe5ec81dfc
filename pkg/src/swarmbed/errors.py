"""Exception hierarchy shared by every subsystem."""


class SwarmbedError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SwarmbedError, ValueError):
    pass


class InvalidIntervalError(SwarmbedError, ValueError):
    """Raised when a time interval is zero or negative."""


class UnsupportedBranchError(SwarmbedError, ValueError):
    pass


class DegenerateFrameError(SwarmbedError, ValueError):
    pass


class InvalidRequestError(SwarmbedError, KeyError):
    pass


class OwnershipError(SwarmbedError):
    """A topic already has a publisher."""


class RequestTimeout(SwarmbedError, TimeoutError):
    def __init__(self, service, timed_out_at):
        super().__init__(f"no reply from {service} (timed out at t={timed_out_at:.6f} s)")
        self.service = service
        self.timed_out_at = timed_out_at


class RemoteError(SwarmbedError):
    """A service responder raised; the original exception is chained."""


class ShapeError(SwarmbedError, ValueError):
    pass


class StaleDataError(SwarmbedError):
    pass


class DegenerateSwarmError(SwarmbedError, ValueError):
    pass


class FormationSpecError(SwarmbedError, ValueError):
    pass


class ConfigError(SwarmbedError, ValueError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class RuntimeViolation(SwarmbedError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


class TrajectoryParseError(SwarmbedError, ValueError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
