"""Physical constants (SI). Gravitational parameters are TDB-compatible."""

C_LIGHT = 299_792_458.0
AU = 149_597_870_700.0

GM_EARTH = 3.986004418e14
GM_SUN = 1.32712440041e20
GM_MOON = 4.9028000661e12

R_EARTH = 6_371_000.0  # tangential-altitude reference radius
R_MOON = 1_737_400.0
R_MOON_GRAVITY = 1_738_000.0

OMEGA_EARTH = 7.2921150e-5  # rad/s

# defining rates of the relativistic time scales
L_B = 1.550519768e-8
L_G = 6.969290134e-10
L_L = 3.14027e-11

# 1977-01-01T00:00:00 TAI read on the TT clock
T0_TT = 32.184
TAI_MINUS_GPST = 19.0
TT_MINUS_TAI = 32.184

SOLAR_FLUX_1AU = 1360.0  # W/m^2

BOLTZMANN = 1.38e-23

F_L1 = 1575.42e6
F_L5 = 1176.45e6
CHIP_RATE_L1 = 1.023e6
CHIP_RATE_L5 = 10.23e6
