"""Regenerate robot1.mdp and robot2.mdp (grid layouts are listed at the bottom)."""


def offset(name, d):
    return f"{name}+{d}" if d >= 0 else f"{name}-{-d}"


def robot(name, goal, obstacles, near_p, far_p):
    def blocked(dx, dy):
        return " | ".join(f"({offset('x', dx)}={a} & {offset('y', dy)}={b})" for a, b in obstacles)

    near = " | ".join(f"(x={a + dx} & y={b + dy})" for a, b in obstacles
                      for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                      if 0 <= a + dx <= 3 and 0 <= b + dy <= 2)
    moves = [("east", "x<3", blocked(1, 0), "x'=x+1"), ("west", "x>0", blocked(-1, 0), "x'=x-1"),
             ("north", "y<2", blocked(0, 1), "y'=y+1"), ("south", "y>0", blocked(0, -1), "y'=y-1")]
    lines = [f"// Mobile robot {name} on a 4x3 grid with obstacles; it may get stuck on the way.",
             "mdp", "",
             f"const double pStuckNear = {near_p};  // next to an obstacle",
             f"const double pStuckFar = {far_p};", "",
             f"formula goal = x={goal[0]} & y={goal[1]};",
             f"formula near = {near};", "",
             "module robot",
             "  x : [0..3] init 0;", "  y : [0..2] init 0;", "  stuck : bool init false;", ""]
    for act, bound, block, upd in moves:
        for tag, p in (("near", "pStuckNear"), ("!near", "pStuckFar")):
            lines.append(f"  [{act}] !stuck & !goal & {bound} & !({block}) & {tag} -> "
                         f"{p} : (stuck'=true) + (1-{p}) : ({upd});")
    lines += ["  [] stuck | goal -> 1 : true;", "endmodule", "",
              "label \"done\" = goal & !stuck;", "label \"stuck\" = stuck;", ""]
    return "\n".join(lines)


if __name__ == "__main__":
    with open("robot1.mdp", "w") as fh:
        fh.write(robot("1", (3, 2), [(1, 1), (2, 1)], 0.05, 0.01))
    with open("robot2.mdp", "w") as fh:
        fh.write(robot("2", (3, 0), [(1, 0), (2, 2)], 0.08, 0.02))
