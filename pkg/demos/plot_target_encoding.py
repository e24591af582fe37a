"""
Colors as bit vectors
=====================

A color byte becomes eight binary labels, and a vector of bit
probabilities decodes back to a color by weighting each place value.
"""

import numpy as np

from nfc.encoding import binary_decode, binary_encode, msb_first, probability_decode

# the byte 203, most significant bit first
bits = binary_encode(203)
print("203 ->", msb_first(bits))

# hard bits decode exactly
print("decoded:", binary_decode(bits), f"({probability_decode(bits):.6f} as a probability decode)")

###############################################################################
# Soft predictions decode linearly. Flipping confidence in the top bit moves
# the color by about half the range, flipping the lowest bit barely moves it.

soft = bits.astype(float)
for place in (7, 0):
    p = soft.copy()
    p[place] = 0.5
    print(f"bit {place} uncertain: {probability_decode(p) * 255:.2f}")

###############################################################################
# Every byte survives the roundtrip.

ys = np.arange(256)
print("all 256 decode exactly:", np.array_equal(np.rint(probability_decode(binary_encode(ys)) * 255), ys))
