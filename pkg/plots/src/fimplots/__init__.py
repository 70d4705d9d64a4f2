"""Figure rendering for simulator experiment CSVs.

Consumes only the documented CSV schemas (the 16-column run/sweep
output and the 9-column microbenchmark output) and renders the five
standard figure kinds as vector plus raster images.
"""

from .figures import (
    FIGURE_KINDS,
    MODEL_COLORS,
    MODEL_ORDER,
    FigureSpec,
    RenderedFigure,
    geometric_mean,
    main,
    render_figures,
)

__version__ = "0.1.0"
