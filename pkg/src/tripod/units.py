"""Unit conventions.

All simulation math runs in a millimetre-kilogram-second system:

    length  mm        velocity  mm/s      acceleration  mm/s^2
    mass    kg        force     mN        stiffness     mN/mm  (= N/m)
    pressure/modulus  mN/mm^2   (= kPa)

Configuration surfaces keep the conventional engineering units (Pa for
Young's modulus, N/mm for servo and contact stiffnesses) and are converted
once, at the boundary, with the constants below.
"""

PA_TO_MN_PER_MM2 = 1e-3
N_PER_MM_TO_MN_PER_MM = 1e3
