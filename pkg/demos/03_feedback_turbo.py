"""Slepian-Wolf coding over a binary symmetric virtual channel.

The decoder holds a noisy copy of a random bit string (each bit flipped with
probability p) and asks the encoder for parity chunks until the turbo
decoder's output passes the CRC. The spent rate is compared with the
conditional entropy h2(p), the least any such code could send.

    python3 demos/03_feedback_turbo.py
"""

import numpy as np

from wzdvc.turbo import ParityServer, binary_entropy, decode_with_feedback, turbo_encode

rng = np.random.default_rng(1)
n_blocks = 20
print("   p     h2(p)  rate   requests/block  verified")
for p in (0.005, 0.02, 0.05, 0.1, 0.15):
    x = rng.integers(0, 2, n_blocks * 1024, dtype=np.uint8)
    si = x ^ (rng.random(x.size) < p).astype(np.uint8)
    res = decode_with_feedback(si, ParityServer(turbo_encode(x)), p)
    print(f"{p:6.3f}  {binary_entropy(p):.3f}  {res.rate:.3f}  {res.requests.mean():14.2f}  "
          f"{int(res.block_verified.sum())}/{n_blocks}")
