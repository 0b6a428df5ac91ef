"""Recorded device power profiles: CSV ingestion, windowing and zero-order-hold playback."""
from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass

US_PER_MIN = 60_000_000
US_PER_HOUR = 60 * US_PER_MIN


class ProfileError(ValueError):
    pass


class ParseError(ProfileError):
    pass


class NonMonotoneTime(ProfileError):
    pass


class EmptyWindow(ProfileError):
    pass


class BeforeStart(ProfileError):
    pass


@dataclass(frozen=True)
class Profile:
    device_id: str
    t_us: tuple[int, ...]
    power_w: tuple[float, ...]
    epoch_label: str = ""

    def __post_init__(self):
        if len(self.t_us) != len(self.power_w):
            raise ProfileError("time and power columns differ in length")
        if not self.t_us:
            raise ProfileError("profile has no samples")
        if any(b <= a for a, b in zip(self.t_us, self.t_us[1:])):
            raise NonMonotoneTime(f"{self.device_id}: timestamps must strictly increase")

    def __len__(self) -> int:
        return len(self.t_us)

    @property
    def samples(self) -> list[tuple[int, float]]:
        return list(zip(self.t_us, self.power_w))


def load_profile(csv_text: str, device_id: str = "", epoch_label: str = "") -> Profile:
    """Parse a ``t_us,power_w`` CSV."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows or [c.strip() for c in rows[0]] != ["t_us", "power_w"]:
        raise ParseError("expected header 't_us,power_w'")
    times: list[int] = []
    powers: list[float] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            t = int(row[0])
            p = float(row[1])
        except ValueError:
            raise ParseError(f"line {lineno}: bad number in {row!r}") from None
        if not math.isfinite(p):
            raise ParseError(f"line {lineno}: non-finite power")
        if times and t <= times[-1]:
            raise NonMonotoneTime(f"line {lineno}: t={t} does not follow t={times[-1]}")
        times.append(t)
        powers.append(p)
    if not times:
        raise ParseError("profile has no data rows")
    return Profile(device_id, tuple(times), tuple(powers), epoch_label)


def dump_profile(p: Profile) -> str:
    lines = ["t_us,power_w"]
    lines += [f"{t},{w!r}" for t, w in zip(p.t_us, p.power_w)]
    return "\n".join(lines) + "\n"


def crop_window(p: Profile, start_us: int, end_us: int) -> Profile:
    """Keep samples with start <= t < end and re-base time to the window start."""
    if start_us >= end_us:
        raise ValueError("window start must precede its end")
    lo = bisect.bisect_left(p.t_us, start_us)
    hi = bisect.bisect_left(p.t_us, end_us)
    if lo >= hi:
        raise EmptyWindow(f"{p.device_id}: no samples in [{start_us}, {end_us})")
    return Profile(
        p.device_id,
        tuple(t - start_us for t in p.t_us[lo:hi]),
        p.power_w[lo:hi],
        p.epoch_label,
    )


def sample_hold(p: Profile, t_us: int) -> float:
    """Value of the latest sample at or before ``t_us``."""
    i = bisect.bisect_right(p.t_us, t_us) - 1
    if i < 0:
        raise BeforeStart(f"{p.device_id}: t={t_us} precedes first sample at {p.t_us[0]}")
    return p.power_w[i]


# Synthetic stand-ins for the recorded summer-day curves. Both are sampled
# every minute from 09:00 (t=0) to 16:00 inclusive.

def synthetic_pv(peak_w: float = 3500.0) -> Profile:
    """Half-sine production curve over 09:00-16:00, peaking at 12:30."""
    n = 7 * 60 + 1
    times = tuple(i * US_PER_MIN for i in range(n))
    power = tuple(round(peak_w * math.sin(math.pi * i / (n - 1)), 1) for i in range(n))
    return Profile("pv", times, power, "2018-07-30 09:00 (synthetic)")


# (start minute after 09:00, consumption W)
_BUILDING_STEPS = [(0, 1200.0), (75, 1500.0), (160, 2600.0), (190, 2000.0), (270, 2800.0), (330, 1400.0)]


def synthetic_building() -> Profile:
    """Step-wise building consumption between 1.2 and 2.8 kW."""
    n = 7 * 60 + 1
    times = tuple(i * US_PER_MIN for i in range(n))
    starts = [s for s, _ in _BUILDING_STEPS]
    power = tuple(_BUILDING_STEPS[bisect.bisect_right(starts, i) - 1][1] for i in range(n))
    return Profile("building", times, power, "2018-07-30 09:00 (synthetic)")
