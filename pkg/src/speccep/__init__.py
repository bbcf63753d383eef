"""Speculative window-parallel complex event processing with consumption policies."""

from .events import Event, EventStream, PriceModel, generate_random_stream, read_stream_csv, write_stream_csv
from .query import ComplexEvent, PatternDefinition, QueryConfigError, build_query
from .splitter import Window, WindowSplitter
from .tree import ConsumptionGroup, DependencyTree, WindowVersion
from .prediction import FixedPredictor, MarkovPredictor
from .scheduler import find_top_k_versions
from .runtime import Engine, EngineConfig, RunStats, run, run_stepped, run_threaded
from .oracle import direct_matches, run_sequential
from .bench import RunConfig, run_benchmark, measure_ground_truth
from .kernels import COMPILED

__version__ = "0.1.0"
