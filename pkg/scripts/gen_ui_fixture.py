#!/usr/bin/env python3
"""Write the scripted force sequence the browser client's round-trip test
drives through the pointer mapping (frontend/fixtures/force_script.json).

The script walks a full small protocol (3x20 trials, 12 probes) against a
shadow session engine, so probe timing matches what the service will do
when the generated stream is replayed.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from flowtrace.dataio import ProtocolConfig
from flowtrace.service import SessionEngine
from flowtrace.simulate import SimParams, flow_to_loop_params, simulate_trial
from flowtrace.task import TrialConfig

RATE_HZ = 40.0
SEED = 2718
RESPONSES = [(3, 4, 4), (5, 5, 6), (2, 3, 3), (6, 6, 7), (4, 4, 5), (5, 6, 6),
             (3, 3, 4), (6, 5, 6), (4, 5, 4), (2, 2, 3), (5, 4, 5), (6, 7, 6)]

PROTOCOL = dict(
    sessions=3,
    trials_per_session=20,
    probes_per_session=4,
    min_gap=5,
    practice_trials=1,
    skill_trials=12,
    skill_transitions=8,
)


def main():
    config = ProtocolConfig(trial=TrialConfig(), **PROTOCOL)
    engine = SessionEngine("fixture", config, seed=SEED)
    params = SimParams()
    messages = []
    trace = None
    trial_counter = -1
    probe_count = 0
    t, dt = 0.0, 1.0 / RATE_HZ
    while not engine.done and t < 1200.0:
        trial = engine.open_trial
        force = 0.0
        if trial is not None and trace is not None:
            idx = int((t - trial.start_t) / trace.dt)
            if 0 <= idx < trace.samples.size:
                force = float(trace.samples[idx])
        message = {"type": "sample", "t": round(t, 6), "force": force}
        events = engine.ingest_sample(message["t"], force)
        messages.append(message)
        if trial is None and engine.open_trial is not None:
            trial_counter += 1
            loop = flow_to_loop_params(4.0, params)
            trace = simulate_trial(params, loop, config.trial,
                                   np.random.default_rng([SEED, trial_counter]))
        for event in events:
            if event.type == "probe_request":
                r = RESPONSES[probe_count % len(RESPONSES)]
                probe_count += 1
                engine.answer_probe(*r)
                messages.append({"type": "probe_response",
                                 "r1": r[0], "r2": r[1], "r3": r[2]})
        t += dt
    assert engine.done, "fixture protocol did not finish"
    assert probe_count == 12, f"expected 12 probes, got {probe_count}"

    out = Path(__file__).resolve().parent.parent / "frontend" / "fixtures" / "force_script.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {"rate_hz": RATE_HZ, "seed": SEED, "protocol": PROTOCOL,
           "responses": RESPONSES[:probe_count], "messages": messages}
    out.write_text(json.dumps(doc))
    print(f"wrote {out} ({len(messages)} messages, {probe_count} probes, "
          f"{sum(len(s) for s in engine.sessions)} main trials)")


if __name__ == "__main__":
    main()
