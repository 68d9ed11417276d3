"""Case files, benchmark generators, raster input and outputs."""
from .config import CaseConfig, CaseParseError, parse_case, parse_case_text, serialize_case, write_case
from .model import CaseSetup, build_case, initial_state, refine_case, run_case
from .output import OutputWriter, read_stats, summarize, write_stats, write_vtk
from .raster import RasterError, load_raster, lognormal_field, write_raster
from .staircase import generate_staircase, staircase_layout, write_staircase

__all__ = ["CaseConfig", "CaseParseError", "parse_case", "parse_case_text", "serialize_case",
           "write_case", "CaseSetup", "build_case", "initial_state", "refine_case", "run_case",
           "OutputWriter", "read_stats", "summarize", "write_stats", "write_vtk", "RasterError",
           "load_raster", "lognormal_field", "write_raster", "generate_staircase",
           "staircase_layout", "write_staircase"]
