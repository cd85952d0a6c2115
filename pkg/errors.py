"""
errors.py - Exception types shared by every stage of the toolkit

Library code raises these; only main.py turns them into exit codes.
"""


class ColdkitError(Exception):
    """Root of all toolkit errors."""


class MalformedFile(ColdkitError, ValueError):
    pass


class InvariantViolation(ColdkitError, ValueError):
    pass


class FeatureDimMismatch(ColdkitError, ValueError):
    pass


class PlacementExhausted(ColdkitError, RuntimeError):
    pass


class MissingFeature(ColdkitError, ValueError):
    pass


class UnknownTarget(ColdkitError, LookupError):
    pass


class UnknownId(ColdkitError, LookupError):
    pass


class AnchorNotInMap(ColdkitError, LookupError):
    pass


class NoValidAnchor(ColdkitError):
    pass


class ArityMismatch(ColdkitError, ValueError):
    pass


class ParseError(ColdkitError, ValueError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnknownCategory(ParseError):
    def __init__(self, category: str, offset: int = 0):
        super().__init__(f"unknown category '{category}'", offset)
        self.category = category


class MissingScene(ColdkitError, LookupError):
    def __init__(self, scene_id: str):
        super().__init__(f"scene '{scene_id}' not available")
        self.scene_id = scene_id

    def __str__(self) -> str:
        return self.args[0]


class TooFewPairs(ColdkitError, ValueError):
    pass


class ZeroNormVector(ColdkitError, ValueError):
    pass
