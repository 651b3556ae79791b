"""Butcher tableau of the 3-stage Gauss-Legendre collocation scheme (order 6).

The compiled kernel hardcodes the same literals; keep them in sync.
"""

import math

import numpy as np

_S15 = math.sqrt(15.0)

GL3_C = np.array([0.5 - _S15 / 10.0, 0.5, 0.5 + _S15 / 10.0])
GL3_A = np.array(
    [
        [5.0 / 36.0, 2.0 / 9.0 - _S15 / 15.0, 5.0 / 36.0 - _S15 / 30.0],
        [5.0 / 36.0 + _S15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - _S15 / 24.0],
        [5.0 / 36.0 + _S15 / 30.0, 2.0 / 9.0 + _S15 / 15.0, 5.0 / 36.0],
    ]
)
GL3_B = np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0])
