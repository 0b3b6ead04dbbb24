"""Regenerate the 16x16 digit glyph PBMs shipped for the synthetic generator."""

from pathlib import Path

from celledproj.imagecore import BinaryImage, save_pbm

GLYPHS = {
    0: """
................
................
.....######.....
....########....
...###....###...
...##......##...
...##......##...
...##......##...
...##......##...
...##......##...
...##......##...
...###....###...
....########....
.....######.....
................
................""",
    1: """
................
................
.......###......
......####......
.....#####......
....###.##......
........##......
........##......
........##......
........##......
........##......
........##......
.....########...
.....########...
................
................""",
    2: """
................
................
.....######.....
....########....
...##.....###...
...........##...
..........###...
.........###....
.......###......
.....###........
....###.........
...##...........
...##########...
...##########...
................
................""",
    3: """
................
................
....#######.....
....########....
..........###...
...........##...
..........###...
......#####.....
......#####.....
..........###...
...........##...
..........###...
....########....
....#######.....
................
................""",
    4: """
................
................
.........##.....
........###.....
.......####.....
......##.##.....
.....##..##.....
....##...##.....
...##....##.....
...###########..
...###########..
.........##.....
.........##.....
.........##.....
................
................""",
    5: """
................
................
....#########...
....#########...
....##..........
....##..........
....#######.....
....########....
..........###...
...........##...
...........##...
...##.....###...
....########....
.....######.....
................
................""",
    6: """
................
................
.......####.....
.....####.......
....###.........
...###..........
...##.######....
...##########...
...###....###...
...##......##...
...##......##...
...###....###...
....########....
.....######.....
................
................""",
    7: """
................
................
...##########...
...##########...
...........##...
..........###...
.........###....
........###.....
.......###......
.......##.......
......###.......
......##........
......##........
......##........
................
................""",
    8: """
................
................
.....######.....
....########....
...###....###...
...##......##...
...###....###...
....########....
....########....
...###....###...
...##......##...
...###....###...
....########....
.....######.....
................
................""",
    9: """
................
................
.....######.....
....########....
...###....###...
...##......##...
...##......##...
...###....###...
....#########...
.....######.##..
...........##...
..........###...
.......#####....
.....####.......
................
................""",
}


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for digit, art in GLYPHS.items():
        rows = [r for r in art.strip().splitlines()]
        assert len(rows) == 16 and all(len(r) == 16 for r in rows), digit
        save_pbm(BinaryImage.from_rows(rows), out / f"digit{digit}.pbm")


if __name__ == "__main__":
    import sys

    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parents[1] / "src/celledproj/templates")
