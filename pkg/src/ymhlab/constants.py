"""Sign and normalization conventions, fixed once, plus pinned tolerances.

Geometry of the unit torus
--------------------------
Coordinates (x, y) in [0,1)^2, z = x + i y, metric g = dx^2 + dy^2,
Kaehler form  omega = dx ^ dy = (i/2) dz ^ dzbar,  Vol = 1.

A (1,1)-form is stored by its dz^dzbar coefficient Fc.  The contraction
with omega is normalized so that Lambda(omega * Id) = Id, which forces

    Lambda(Fc dz^dzbar) = -2i * Fc        =>   sqrt(-1)*Lambda*F = 2*Fc.

Pointwise norms pick up the metric factors |dz|^2 = |dzbar|^2 = 2 and
|dz^dzbar|^2 = 4, so |F|^2 = |sqrt(-1)*Lambda F|^2 for (1,1)-forms.

Derivatives
-----------
dbar = (D_x + i D_y)/2 and del = (D_x - i D_y)/2 with covariant central
differences against the background link phases.  The scalar Laplacian is
the compact covariant 5-point stencil; on smooth fields it agrees with
-2*sqrt(-1)*Lambda*dbar*del = +2*sqrt(-1)*Lambda*del*dbar (this is the one
sign choice that makes the metric flow a heat equation, documented here
once; the operator has symbol -(2/a^2)(2 - cos - cos) <= 0).

Flux orientation
----------------
For a line sector of twist d the links carry magnetic field B = -2*pi*d
(counterclockwise plaquette argument -2*pi*d/n^2).  Chern-Weil with the
orientation above reads deg = -(1/2pi) * integral(B), hence the degree
readout integrate(tr sqrt(-1)*Lambda*F)/2pi = +d and, for d > 0, the
discrete dbar on that sector has a d-dimensional smooth near-kernel
(Riemann-Roch).  "Plaquette flux" is always quoted in the orientation in
which it equals 2*pi*twist.
"""

import numpy as np

# sqrt(-1)*Lambda applied to a stored dz^dzbar coefficient
SQRTM1_LAMBDA = 2.0
# |dz|^2 under g = dx^2 + dy^2
DZ_NORM_SQ = 2.0
# |dz^dzbar|^2
DZDZBAR_NORM_SQ = 4.0

# Wilson-like stabilizer weight in the section-solver dbar (third order in a,
# lifts the lattice doubler branches away from zero).
WILSON_WEIGHT = 1.0
# Normalized covariant-Laplacian roughness -a^2 <v, Lap v> separating smooth
# near-kernel sections (<= ~0.2 under the n^2 >= 32|d| precondition) from
# doubler modes (>= ~1.0).
ROUGHNESS_CUTOFF = 0.6

# resolution precondition for a twist-d sector
MIN_SITES_PER_FLUX = 32

# default discrete-holomorphy tolerance for Higgs fields: 10 / n^2
HOLO_TOL_FACTOR = 10.0

# pinned verification tolerances (acceptance criteria)
TYPE_TOL = 0.02              # per-entry limit-type match and spatial deviation
DOMINANCE_TOL = 0.05         # running-estimate partial sums vs oracle type
WHC_TOL_ORACLE = 1e-6        # residuals of declared/oracle filtrations
WHC_TOL_LIMIT = 1e-3         # residuals of converged spectral projections
DEGREE_TOL_FACTOR = 5.0      # degree formula tolerance 5/n
IFUNC_DROP = 1e-4            # final I < IFUNC_DROP * max(I(0), IFUNC_FLOOR)
IFUNC_FLOOR = 1e-12
ACD_DROP = 0.05              # approximate-critical distance contraction
PHI_SUP_GROWTH = 1.10        # sup|phi|^2 never exceeds this times initial
TRACE_HEAT_CONST = 50.0      # residual <= const * (dt + n^-2) * scale
REFINE_MIN_ORDER = 1.8
# monotonicity slack: eps_int = EPS_INT_FACTOR * dt * max|dE/dt| (+ floor)
EPS_INT_FACTOR = 10.0
EPS_INT_FLOOR = 1e-12

SNAPSHOT_MAGIC = b"YMHF"
SNAPSHOT_VERSION = 1

COMPLEX = np.complex128
REAL = np.float64
