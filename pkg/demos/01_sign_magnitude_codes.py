"""
Two-bit sign-magnitude codes
============================

Every vector becomes two bit planes: a sign plane (is the coordinate
positive?) and a magnitude plane (is it larger than the vector's mean
absolute value?). Distances between codes are weighted popcounts.
"""

import numpy as np

import bqgraph as bq
from bqgraph.encoding import unpack_bits

# A tiny vector makes the bit planes easy to read off.
x = np.array([0.5, -0.2, 0.9, -0.1])
sig = bq.encode_sm2(x)
print("threshold tau      ", sig.tau)
print("sign plane         ", unpack_bits(sig.pos_bits, 4).astype(int))
print("magnitude plane    ", unpack_bits(sig.strong_bits, 4).astype(int))

# A sign disagreement costs 1, 2 or 4 depending on how many of the two
# coordinates are "strong". Flipping only the first coordinate (strong on
# both sides) and the last one (weak on both sides) costs 4 + 1.
y = np.array([-0.5, -0.2, 0.9, 0.1])
print("sm2 distance       ", bq.sm2_distance(sig, bq.encode_sm2(y)))

# The one-bit sign code ignores magnitude entirely.
print("hamming distance   ", bq.hamming_distance(bq.encode_sign1(x), bq.encode_sign1(y)))

# For Gaussian vectors the sign code estimates the angle: the expected
# fraction of differing bits is angle / pi. Pairs here are correlated to
# spread the angles between 0 and 90 degrees.
rng = np.random.default_rng(0)
a = rng.standard_normal((2000, 768))
b = a + rng.uniform(0.1, 3.0, (2000, 1)) * rng.standard_normal((2000, 768))
ham = np.array([bq.hamming_distance(bq.encode_sign1(u), bq.encode_sign1(v)) for u, v in zip(a, b)])
cos = np.einsum("ij,ij->i", a, b) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
print("mean hamming / D   ", (ham / 768).mean().round(4))
print("mean angle / pi    ", (np.arccos(cos) / np.pi).mean().round(4))

# The strong-bit rate says how much the magnitude plane is used. For
# Gaussian coordinates about 42.5% of the bits are set.
diag = bq.strong_bit_rate(rng.standard_normal((5000, 768)))
print(f"strong-bit rate     {diag.p_s:.3f}   effective weight nu2 {diag.nu2:.2f}")
