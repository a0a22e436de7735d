"""
The two-round block game
========================

Each trial drops one block towards a line with a gap.  The Senders see the
gap, the Receiver does not.  After round 1 the block is halfway down and
can still be fixed in round 2.
"""

from brainnet_sim.game import Role, apply_decision, correct_action, generate_schedule, render_view

schedule = generate_schedule(seed=3)
print(f"{len(schedule)} trials, {sum(t.requires_rotation for t in schedule)} need a rotation")

# %%
# Draw the first trial as the Sender sees it.

trial = schedule[0]


def draw(state):
    rows = ["".join("#" if c else "." for c in row) for row in state.block.grid]
    pad = " " * state.gap.column
    line = "".join("=" if c else "_" for c in state.gap.occupancy)
    return "\n".join(pad + r for r in rows) + "\n" + line


print(draw(trial))
print("correct action:", correct_action(trial).value)

# %%
# The Receiver's view carries no gap at all.

print(sorted(render_view(trial, Role.RECEIVER).to_dict()))
print(sorted(render_view(trial, Role.SENDER).to_dict()))

# %%
# A wrong first move is recoverable: round 2 asks for the opposite action.

mid = apply_decision(trial, correct_action(trial).flipped())
print("after a wrong round 1, round 2 wants:", correct_action(mid).value)
done = apply_decision(mid, correct_action(mid))
print(draw(done))
print("fall stage:", done.fall_stage.value)
