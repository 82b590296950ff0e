"""
A routed session that crashes and resumes
=========================================

Run a replay session, kill it partway through, resume from the last
checkpoint and compare the logs with an uninterrupted run.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from entroute import ReplayBackend, RoutingConfig, resume_session, run_session
from entroute.fixtures import reference_trace
from entroute.session import LOGS, read_log

records = reference_trace()
work = [r.input_tokens for r in records]
config = RoutingConfig()
tmp = Path(tempfile.mkdtemp())


def backends():
    return {m: ReplayBackend(m, records) for m in ("base", "support")}


clean = run_session(config, backends(), work, tmp / "clean", checkpoint_every=3, session_id="demo")
print(clean.status.value, clean.cost().micro_dollars, "micro-dollars")


class Killed(BaseException):
    pass


class DiesAtStep7:
    def __init__(self, inner):
        self.inner, self.model_id = inner, inner.model_id

    def complete(self, prompt_tokens, step, role=None, prompt=None):
        if step == 7:
            raise Killed()
        return self.inner.complete(prompt_tokens, step, role, prompt)


try:
    run_session(config, {m: DiesAtStep7(b) for m, b in backends().items()}, work, tmp / "crashy",
                checkpoint_every=3, session_id="demo")
except Killed:
    print("killed at step 7; checkpointed steps:", len(read_log(tmp / "crashy", "trace")))

resumed = resume_session(tmp / "crashy", config, backends(), work, checkpoint_every=3)
same = all((tmp / "clean" / f"{n}.jsonl").read_bytes() == (tmp / "crashy" / f"{n}.jsonl").read_bytes()
           for n in LOGS)
print(resumed.status.value, "identical logs:", same)
for row in read_log(tmp / "crashy", "decisions")[-3:]:
    print(row)
