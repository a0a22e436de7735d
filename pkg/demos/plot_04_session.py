"""
One triad session, in process and over TCP
==========================================

The orchestrator pushes state, collects both Senders' decisions, corrupts
the unreliable Sender on 10 of 16 trials, and delivers two pulses 8 s
apart.  With a virtual clock this takes well under a second.
"""

import threading
import time

from brainnet_sim.session import AgentConfig, SessionConfig, SessionServer, SessionSeeds, run_client, run_session
from brainnet_sim.sessionlog import replay

seeds = SessionSeeds.derive(master=5, triad=0)
t0 = time.perf_counter()
log = run_session(seeds=seeds)
print(f"{log.end['score']}/16 cleared, {log.end['tick'] / 1000:.0f} s simulated in {time.perf_counter() - t0:.2f} s")
print("bad sender:", log.victim, "corrupted trials:", log.plan["corrupted_trials"])

# %%
# Trust as the Receiver learns it, one row per trial.

for t in log.trials:
    est = t["trust"]["estimates"]
    print(f"trial {t['trial']:2d}  outcome {t['outcome']}  trust {est[0]:.2f} {est[1]:.2f}")

# %%
# The same seeds over loopback TCP give the same decisions.

server = SessionServer(SessionConfig(), AgentConfig(), seeds)
threads = [threading.Thread(target=run_client, args=(role, server.host, server.port))
           for role in ("sender", "sender", "receiver")]
for th in threads:
    th.start()
tcp_log = server.serve()
for th in threads:
    th.join()
print("identical decisions:", tcp_log.decision_sequence() == log.decision_sequence())
print("replay:", replay(tcp_log))
