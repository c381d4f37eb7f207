"""Random block-coordinate primal-dual splitting.

Submodules
----------
linalg        block vectors, block operators, diagonal metrics, norm estimates
operators     proximity operators, resolvents, smooth terms
activation    random activation patterns and coupling closures
errors        summable stochastic error injectors
fb_engine     block-coordinate forward-backward iteration
pd_engine     primal-dual iterations, condition checks, runner
distributed   hypergraph consensus algorithms
harness       problem zoo, reference solvers, experiment records
"""

__version__ = "0.1.0"
