# Emulating the inter-site link.
#
# Delays are a truncated Gaussian around 32 ms with rare uniform spikes in
# 70-85 ms. Stream links keep order (a late message holds back the ones behind
# it); datagram links can reorder.
import numpy as np

from gridloop.netem import DelayModel, Link, LinkMode, delay_sample, make_rng

model = DelayModel()
rng = make_rng(42, "demo")
d = np.array([delay_sample(model, rng) for _ in range(10_000)])
print(f"mean {d.mean():.2f} ms  max {d.max():.2f} ms  spikes {(d >= 70).sum()}")

# coarse text histogram
counts, edges = np.histogram(d, bins=[0, 26, 28, 30, 32, 34, 36, 38, 70, 75, 80, 86])
for c, lo, hi in zip(counts, edges, edges[1:]):
    print(f"{lo:4.0f}-{hi:<4.0f} {'#' * int(60 * c / counts.max())} {c}")

# the ordering claim depends on the send period
for period_ms in (1000, 100, 10):
    link = Link(DelayModel(mode=LinkMode.DATAGRAM), make_rng(42, "order"))
    for k in range(10_000):
        link.deliver(k * period_ms * 1000)
    print(f"datagram, {period_ms:4d} ms period: {link.stats().reorder_count} reordered pairs")

stream = Link(DelayModel(mode=LinkMode.STREAM), make_rng(42, "order"))
for k in range(10_000):
    stream.deliver(k * 10_000)
print("stream,     10 ms period:", stream.stats().reorder_count, "reordered pairs")
