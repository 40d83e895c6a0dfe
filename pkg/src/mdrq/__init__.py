"""
In-memory multidimensional range queries over kd-trees, R*-trees, VA-files and parallel scans.
"""

__version__ = "0.1"

from .core import *
from .config import *
from .parallel import *
from .scan import *
from .kdtree import *
from .rstar import *
from .vafile import *
from .workload import *
from .methods import *
from .bench import *
