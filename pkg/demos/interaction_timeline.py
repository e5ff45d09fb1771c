"""Watch the obstacle's planned speeds react to the ego's shared path.

Hooks an observer into the tick loop and prints, once per second, the
obstacle's first planned speed under PF_SP and PF_ISO together with the
gap to the ego. The ISO planner starts shedding speed while the ego is
still behind it, because the ego's broadcast waypoints cut across the
obstacle's own predicted path.
"""

from pfiso import PlannerKind, default_scenario_path, load_scenario, run_scenario


def first_speeds(cfg, kind):
    seen = {}

    def on_plan(tick, vid, plan):
        if vid == "obstacle" and tick % 10 == 0:
            seen[tick] = float(plan.profile.speeds[0])

    result = run_scenario(cfg.with_planner(kind), on_plan=on_plan)
    return seen, result


def main():
    cfg = load_scenario(default_scenario_path())
    sp, _ = first_speeds(cfg, PlannerKind.PF_SP)
    iso, result = first_speeds(cfg, PlannerKind.PF_ISO)
    obstacle = result.traces["obstacle"].array()
    ego = result.traces["ego"].array()
    print(f"{'t [s]':>6}{'SP v0':>10}{'ISO v0':>10}{'ego x - obs x':>16}")
    for tick in sorted(iso):
        if tick >= len(ego):
            break
        gap = ego[tick, 1] - obstacle[tick, 1]
        print(f"{tick * cfg.sim.dt:>6.1f}{sp.get(tick, float('nan')):>10.2f}{iso[tick]:>10.2f}{gap:>16.2f}")


if __name__ == "__main__":
    main()
