"""Engine inputs and outputs shared by both engine backends."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError


@dataclass(frozen=True)
class EngineConfig:
    chunk_bytes: int = 4096
    buffer_bytes: int = 32768
    router_delay_ns: int = 100
    sample_interval_ns: int = 10_000
    check_paths: bool = True

    def __post_init__(self):
        if self.chunk_bytes < 1:
            raise ConfigError(f"chunk_bytes must be >= 1, got {self.chunk_bytes}")
        if self.buffer_bytes < self.chunk_bytes:
            raise ConfigError(
                f"buffer_bytes ({self.buffer_bytes}) must hold at least one chunk ({self.chunk_bytes})"
            )
        if self.router_delay_ns < 0:
            raise ConfigError(f"router_delay_ns must be >= 0, got {self.router_delay_ns}")
        if self.sample_interval_ns < 1:
            raise ConfigError(f"sample_interval_ns must be >= 1, got {self.sample_interval_ns}")


@dataclass
class EnginePlan:
    """Flat message table grouped into injection batches.

    Every message belongs to exactly one batch.  A batch fires at
    ``batch_time`` or, if ``batch_gate`` names an earlier batch, at the later
    of that time and the delivery of the gate batch's last message.
    """

    num_jobs: int
    msg_job: list = field(default_factory=list)
    msg_src: list = field(default_factory=list)
    msg_dst: list = field(default_factory=list)
    msg_size: list = field(default_factory=list)
    batch_time: list = field(default_factory=list)
    batch_gate: list = field(default_factory=list)
    batch_msgs: list = field(default_factory=list)

    @property
    def num_messages(self):
        return len(self.msg_job)

    def add_message(self, job, src, dst, size):
        self.msg_job.append(job)
        self.msg_src.append(src)
        self.msg_dst.append(dst)
        self.msg_size.append(size)
        return len(self.msg_job) - 1

    def add_batch(self, time, msgs, gate=-1):
        self.batch_time.append(time)
        self.batch_gate.append(gate)
        self.batch_msgs.append(tuple(msgs))
        return len(self.batch_time) - 1

    def check(self):
        n = self.num_messages
        seen = [0] * n
        for b, msgs in enumerate(self.batch_msgs):
            gate = self.batch_gate[b]
            if not -1 <= gate < b:
                raise ConfigError(f"batch {b} gated on batch {gate}; gates must precede")
            if self.batch_time[b] < 0:
                raise ConfigError(f"batch {b} has negative time")
            if not msgs:
                raise ConfigError(f"batch {b} is empty")
            for m in msgs:
                seen[m] += 1
        missing = [m for m in range(n) if seen[m] != 1]
        if missing:
            raise ConfigError(f"messages not in exactly one batch: {missing[:5]}")
        for m in range(n):
            if self.msg_size[m] < 1:
                raise ConfigError(f"message {m} has size {self.msg_size[m]}")


@dataclass
class SimulationReport:
    events: int
    final_time: int
    undelivered: int
    injected_chunks: int
    delivered_chunks: int
    backend: str

    @property
    def in_flight_chunks(self):
        return self.injected_chunks - self.delivered_chunks


@dataclass
class EngineResult:
    """Per-message outcome, indexed like the plan's message table.

    ``delivery_time`` is -1 for undelivered messages.  ``arrivals`` maps
    ``(job, group, window_index)`` to bytes of inter-group chunks received
    by that group's spines during that sample window.  A chunk's bytes are
    apportioned over the time its last link spent delivering it.
    """

    issue_time: list
    delivery_time: list
    hops: list
    path_class: list
    vl: list
    arrivals: dict
    report: SimulationReport
