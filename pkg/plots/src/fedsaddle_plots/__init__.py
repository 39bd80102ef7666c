from .figures import FigureSpec, CsvSchemaError, prepare_series, render

__all__ = ["FigureSpec", "CsvSchemaError", "prepare_series", "render"]
__version__ = "0.1.0"
