#!/usr/bin/env python3
"""Write the YOLOv3 / YOLOv3-SPP layer-graph skeletons and the DLA support profile."""

import json
import pathlib
import sys


class Builder:
    def __init__(self, name):
        self.lines = [f"model {name}"]
        self.n_layers = 0
        self.n_conv = 0

    def block(self, name, ops):
        self.lines.append(f"block {name}")
        for op in ops:
            self.lines.append("layer " + op)
            self.n_layers += 1
        return self.n_layers - 1  # index of the block's last layer

    def conv(self, size, filters, stride=1, extra=""):
        self.n_conv += 1
        conv = f"conv k={size} c={filters} s={stride}" + (f" {extra}" if extra else "")
        return self.block(f"conv_{self.n_conv:02d}", [conv, "batchnorm", "leaky_relu"])


def yolov3(res, spp=False):
    b = Builder(f"yolov3{'-spp' if spp else ''}-{res}")
    last = b.conv(3, 32, extra=f"input={res}x{res}")
    shortcut = 0
    routes = {}
    for stage, (units, ch) in enumerate([(1, 64), (2, 128), (8, 256), (8, 512), (4, 1024)]):
        last = b.conv(3, ch, stride=2)
        for _ in range(units):
            src = last
            b.conv(1, ch // 2)
            b.conv(3, ch)
            shortcut += 1
            last = b.block(f"shortcut_{shortcut:02d}", [f"add from={src}"])
        routes[stage] = last
    # detection heads: large, medium, small objects
    b.conv(1, 512)
    if spp:
        src = b.n_layers - 1
        b.block("spp", [f"maxpool k=5 from={src}", f"maxpool k=9 from={src}", f"maxpool k=13 from={src}", "concat"])
    b.conv(3, 1024)
    b.block("out_1", ["conv k=1 c=255"])
    for head, (route_stage, ch) in enumerate([(3, 256), (2, 128)], start=2):
        b.conv(1, ch)
        b.block(f"upsample_{head}", ["upsample s=2"])
        b.block(f"route_{head}", [f"concat from={routes[route_stage]}"])
        b.block(f"out_{head}", ["conv k=1 c=255"])
    # pad with head convolutions to the reference 57-block count
    while b.n_conv < 57:
        b.conv(1, 256)
    assert b.n_conv == 57, b.n_conv
    return "\n".join(b.lines) + "\n"


def main(out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for res in (288, 416, 608):
        (out / f"yolov3-{res}.lg").write_text(yolov3(res))
        (out / f"yolov3-spp-{res}.lg").write_text(yolov3(res, spp=True))
    prof = {
        "device": "DLA",
        "fallback": "GPU",
        "supported_ops": ["add", "batchnorm", "concat", "conv", "maxpool", "relu", "upsample"],
        "max_fallback_subgraphs": 8,
        "count_total_segments": False,
    }
    (out / "dla.prof").write_text(json.dumps(prof, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "fixtures")
