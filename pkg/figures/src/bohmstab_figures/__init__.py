from .contract import (CSV_VERSION_LINE, MissingColumnError,
                       SchemaMismatchError, read_csv)
from .render import KINDS, FigureSpec, render

__all__ = ["CSV_VERSION_LINE", "MissingColumnError", "SchemaMismatchError",
           "read_csv", "KINDS", "FigureSpec", "render"]
