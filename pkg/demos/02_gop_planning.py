"""Hierarchical B-frame GOP plans: coding order, references, level labels.

Run:  python demos/02_gop_planning.py
"""

from hbvc.gop import plan_gop, validate

# %% The 5-frame training structure: two-level hierarchy at intra period 4.
plan = plan_gop(5, 4)
print("display  type  level  C  refs        k")
for e in plan.in_display_order():
    refs = f"({e.ref_past},{e.ref_future})" if e.frame_type == "B" else "-"
    print(f"   {e.display_index + 1:2d}     {e.frame_type}     {e.level}"
          f"    {e.c}  {refs:10s} {e.k}")
print("coding order (1-based):", [d + 1 for d in plan.coding_order()])

# %% C=1 marks frames at the deepest level: they are never referenced, so the
#    rate control may starve them without hurting anything downstream.

# %% Longer sequences tile full GOPs; a truncated tail closes with extra
#    intra frames at power-of-two distances so every B stays equidistant.
plan = plan_gop(23, 8)
print("\n23 frames, intra period 8:")
print("I frames at:", [e.display_index for e in plan.entries
                       if e.frame_type == "I"])
print("violations:", validate(plan))

# %% Plans serialize to JSON for stream headers and --dump-gop.
print("\nJSON head:", plan_gop(3, 2).to_json(indent=None)[:96], "...")
