"""Printed reference values for the bundled aircraft example (4 decimals)."""

import numpy as np

MU = (4, 3)

GAMMA = np.array([[-0.2708, 1.0], [1.0, 0.0]])

BETA_123 = -14.9336

T = np.array([
    [-20.2951, -3.6294, 8.2259, -1.6452, -10.5207, 0.1539, 0],
    [0, 0, 0, 0, 1, 0, 0],
    [18.4529, 1, 0, 0, -2.8241, 0.2708, 0],
    [0, 0, 0, 0.7529, 0, 0, 0],
    [1, 0, 0, 0, 0.2708, 0, 0],
    [21.5113, -2.1511, 0.2151, -0.0641, -2.8502, 0.285, -0.0285],
    [-0.719, 0.1438, -0.0288, 0.0058, 0, 0, 0],
])

ABAR = np.array([
    [-6.4019, 1, 0, 0, 2.006, 0, 0],
    [-7.0093, 0, 1, 0, 11.1769, 0, 0],
    [0, 0, 0, 1, 6, 0, 0],
    [0, 0, 0, 0, 1.3281, 0, 0],
    [91.7924, 0, 0, 0, -17.8381, 1, 0],
    [593.4635, 0, 0, 0, -271.7324, 0, 1],
    [0, 0, 0, -14.9336, -1220.7850, 0, 0],
])

DBAR = np.array([[0, 0, 0, 0, 0, 0, -701.7]]).T

CBAR = np.array([
    [1, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0],
])

BBAR = np.array([
    [0, 0],
    [0, 77.44050],
    [0, 39.5191],
    [0, 0],
    [0, 0],
    [0, -286],
    [-701.7, -8406.3602],
])

PI = ABAR[:, [0, 4]]

GAIN_THRESHOLD_2 = 14.0340

# augmented plant (state extended by the unknown input)
AUG_MU = (4, 4)

AUG_ABAR = np.array([
    [-17.8381, 1, 0, 0, 91.7924, 0, 0, 0],
    [-271.7324, 0, 1, 0, 593.4635, 0, 0, 0],
    [-1220.785, 0, 0, 1, 0, 0, 0, 0],
    [-19.8337, 0, 0, 0, 0, 0, 0, 0],
    [2.006, 0, 0, 0, -6.4019, 1, 0, 0],
    [11.1769, 0, 0, 0, -7.0093, 0, 1, 0],
    [6, 0, 0, 0, 0, 0, 0, 1],
    [1.328, 0, 0, 0, 0, 0, 0, 0],
])

AUG_DBAR = np.array([[0, 0, 0, -701.7, 0, 0, 0, 0]]).T

AUG_BBAR = np.array([
    [0, 0],
    [0, -286],
    [-701.7, -8406.3602],
    [0, 0],
    [0, 0],
    [0, 77.4405],
    [0, 39.5191],
    [0, 0],
])

AUG_CBAR = np.array([
    [1, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0, 0],
])

AUG_GAIN_THRESHOLD_1 = 32.2782

UNSTABLE_EIGENVALUES = (0.0, 0.1219)
