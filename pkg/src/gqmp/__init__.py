"""Linear precoding by generalized quadratic matrix programming.

Subpackages, from the bottom up: :mod:`gqmp.hermitian` (Hermitian matrix
kernels), :mod:`gqmp.functions` (generalized quadratic matrix functions),
:mod:`gqmp.bounds` (tangent concave surrogates), :mod:`gqmp.subsolver`
(barrier method for the concave subproblems), :mod:`gqmp.algorithms` (outer
majorize-minimize drivers), :mod:`gqmp.mi` (finite-alphabet mutual
information), :mod:`gqmp.scenarios` (secure precoding problems and
baselines) and :mod:`gqmp.harness` / :mod:`gqmp.cli` (experiment runner).
"""

__version__ = "0.1.0"
