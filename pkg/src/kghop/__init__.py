"""kghop: reinforcement-learning engine for multi-hop path prediction over a
knowledge graph. See README.md for the pipeline (graph-build -> transe ->
train -> eval) and the kernels package for the compiled/pure backend split.
"""

__version__ = "0.1.0"

from .kernels import backend_name  # noqa: F401
