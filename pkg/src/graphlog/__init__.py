"""Logarithmic Schrodinger equations on locally finite weighted graphs."""

from .errors import GraphLogError
from .exhaustion import run_exhaustion, uniform_bound
from .functionals import GlobalProblem, LocalProblem, c_eps, constants_ledger
from .graph_core import Graph, GraphSpec, Lattice, VertexFunction, ball, build_graph
from .solvers import SolverConfig, certify, solve_deflated, solve_mountain_pass, solve_nehari, solve_newton
from .spaces import PotentialSpec, check_hypotheses

__version__ = "0.1.0"
