class DimensionError(ValueError):
    """Mask or tensor shapes are empty or do not agree."""


class SchemaError(ValueError):
    """Input document does not follow the expected schema.

    ``field`` holds a dotted/bracketed path to the offending entry.
    """

    def __init__(self, message, field=None, source=None):
        self.field = field
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}: "
        if field is not None:
            where += f"{field}: "
        super().__init__(where + message)


class ValidationError(ValueError):
    """Input is well formed but violates a semantic invariant."""


class DegeneratePolygonWarning(UserWarning):
    """Polygon rasterized to an empty mask."""
