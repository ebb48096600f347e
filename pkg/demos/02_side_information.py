"""Side information from two key frames, searched with different metrics.

Takes one WZ frame of the synthetic corpus (camera pan plus a face moving on
its own path), interpolates it from its neighbours with SAD-driven and
SSIM-driven block matching, and prints how close each interpolation is to
the true frame: MSE, SSIM, bitplane error rates and the estimated rate
H(Fe|Fo) a Slepian-Wolf coder would need per bit.

    python3 demos/02_side_information.py [frame]
"""

import sys

from wzdvc.corpus import motion_corpus
from wzdvc.entropy import conditional_rate, plane_errors
from wzdvc.metrics import mse, ssim
from wzdvc.motion import generate_si
from wzdvc.transform import to_bitplanes

k = int(sys.argv[1]) if len(sys.argv) > 1 else 5
if k % 2 == 0:
    sys.exit("pick an odd frame index: even frames are key frames")
seq = motion_corpus(k + 2)
prev, truth, nxt = (seq.frames[i].luma for i in (k - 1, k, k + 1))

print(f"WZ frame {k}")
print("metric  MSE     SSIM   plane err  MSB1..4                   H(Fe|Fo)")
for metric in ("SAD", "SSIM"):
    si, field = generate_si(prev, nxt, metric)
    pe = plane_errors(truth, si)
    h = conditional_rate(to_bitplanes(truth), to_bitplanes(si)).h
    msb = " ".join(f"{v:.3f}" for v in pe.msb4)
    print(f"{metric:<6}  {mse(si, truth):6.1f}  {ssim(si, truth):.3f}  {pe.mean:.3f}      "
          f"{msb}   {h:.3f}")
