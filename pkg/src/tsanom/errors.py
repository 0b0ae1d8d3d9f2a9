"""Exception hierarchy shared by all tsanom modules."""

from __future__ import annotations


class TsAnomError(Exception):
    """Base class for every error raised by tsanom."""


class MalformedIntervalError(TsAnomError, ValueError):
    pass


class BoundsError(TsAnomError, ValueError):
    pass


class IngestError(TsAnomError):
    def __init__(self, message: str, row: int | None = None, path: str | None = None):
        self.row = row
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SynthSpecError(TsAnomError, ValueError):
    pass


class RenderError(TsAnomError):
    pass


class SchemaError(TsAnomError, ValueError):
    pass


class JudgeFormatError(TsAnomError, ValueError):
    pass


class ScoreRangeError(TsAnomError, ValueError):
    pass


class VerdictFormatError(TsAnomError, ValueError):
    pass


class SelectionError(TsAnomError, ValueError):
    pass


class MetricError(TsAnomError, ValueError):
    pass


class AffiliationUndefinedError(MetricError):
    pass


class DetectorError(TsAnomError, ValueError):
    pass


class EvaluationError(TsAnomError):
    pass


class ConfigError(TsAnomError):
    pass


# -- llm transport ---------------------------------------------------------


class TransportError(TsAnomError):
    """Network failure that persisted through every retry."""


class EndpointError(TsAnomError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint returned HTTP {status}: {body[:500]}")


class ProtocolError(TsAnomError):
    """The endpoint answered 2xx but the payload carried no usable completion."""


class ScriptedMissError(TsAnomError, KeyError):
    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        super().__init__(f"no scripted response for fingerprint {fingerprint}")

    def __str__(self) -> str:
        return self.args[0]
