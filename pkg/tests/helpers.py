"""Shared fixtures: a frozen realistic channel table (snapshot of one
physical-optics tabulation at the default sensing geometry) so module tests
stay fast and deterministic without re-running the optics."""

import numpy as np

from oamqkd.pulse_sim import ChannelTable

REF_R0_GRID = np.array([0.05, 0.08, 0.11, 0.14, 0.17, 0.20])
REF_SIGMA_GRID = np.array([0.0, 4e-6, 8e-6, 1.2e-5, 1.6e-5])
REF_E_D = np.array(
    [
        [0.232, 0.245, 0.292, 0.349, 0.378],
        [0.116, 0.126, 0.168, 0.252, 0.322],
        [0.053, 0.061, 0.102, 0.143, 0.243],
        [0.022, 0.029, 0.064, 0.128, 0.196],
        [0.015, 0.021, 0.052, 0.107, 0.168],
        [0.011, 0.016, 0.039, 0.090, 0.176],
    ]
)
REF_CAPTURE = np.array(
    [
        [0.172, 0.163, 0.137, 0.114, 0.103],
        [0.277, 0.254, 0.210, 0.164, 0.138],
        [0.376, 0.340, 0.261, 0.223, 0.172],
        [0.468, 0.418, 0.322, 0.243, 0.206],
        [0.512, 0.462, 0.345, 0.266, 0.219],
        [0.535, 0.480, 0.372, 0.289, 0.219],
    ]
)


def reference_table() -> ChannelTable:
    return ChannelTable(
        r0_grid=REF_R0_GRID.copy(),
        sigma_grid=REF_SIGMA_GRID.copy(),
        e_d=REF_E_D.copy(),
        capture=REF_CAPTURE.copy(),
    )
