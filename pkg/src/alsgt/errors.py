"""Exception types shared across the toolkit."""


class AlsgtError(Exception):
    """Base class for all toolkit errors."""


class AngleNearPi(AlsgtError, ValueError):
    """Rotation angle too close to pi for the principal-branch logarithm."""


class EmptyCloud(AlsgtError, ValueError):
    pass


class DegenerateScan(AlsgtError, ValueError):
    pass


class CollinearRoof(AlsgtError, ValueError):
    def __init__(self, message="roof projection is collinear", count=1):
        super().__init__(message)
        self.count = count


class NoCorrespondences(AlsgtError, RuntimeError):
    pass


class NotConverged(AlsgtError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EmptyBatch(AlsgtError, ValueError):
    pass


class NonMonotonicTimestamps(AlsgtError, ValueError):
    pass


class SingularSystem(AlsgtError, RuntimeError):
    pass


class EmptyTrajectory(AlsgtError, ValueError):
    pass


class DimensionMismatch(AlsgtError, ValueError):
    pass


class MalformedLine(AlsgtError, ValueError):
    def __init__(self, line_no, message=""):
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")
        self.line_no = line_no


class NonRigidMatrix(AlsgtError, ValueError):
    def __init__(self, line_no, message=""):
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")
        self.line_no = line_no


class BadMagic(AlsgtError, ValueError):
    pass


class UnsupportedFormat(AlsgtError, ValueError):
    def __init__(self, fmt):
        what = fmt if isinstance(fmt, str) else f"LAS point format {fmt}"
        super().__init__(f"unsupported {what}")
        self.fmt = fmt


class TruncatedFile(AlsgtError, ValueError):
    pass


class StageError(AlsgtError, RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage, message, exit_code=1):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.exit_code = exit_code
