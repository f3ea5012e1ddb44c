"""Builds the tiny embedding network used by the model-file tests and
records its reference output with onnxruntime."""
import json

import numpy as np
import onnx
import onnxruntime as ort
from onnx import TensorProto, helper, numpy_helper

rng = np.random.default_rng(7)
conv_w = rng.normal(0, 0.2, (4, 3, 3, 3)).astype(np.float32)
conv_b = rng.normal(0, 0.1, (4,)).astype(np.float32)
fc_w = rng.normal(0, 0.5, (4, 8)).astype(np.float32)
fc_b = rng.normal(0, 0.1, (8,)).astype(np.float32)


def build(path, side):
    nodes = [
        helper.make_node("Conv", ["input", "conv_w", "conv_b"], ["c"], strides=[2, 2], pads=[1, 1, 1, 1]),
        helper.make_node("Relu", ["c"], ["r"]),
        helper.make_node("GlobalAveragePool", ["r"], ["g"]),
        helper.make_node("Flatten", ["g"], ["f"], axis=1),
        helper.make_node("Gemm", ["f", "fc_w", "fc_b"], ["embedding"]),
    ]
    graph = helper.make_graph(
        nodes,
        "tiny",
        [helper.make_tensor_value_info("input", TensorProto.FLOAT, ["N", 3, side, side])],
        [helper.make_tensor_value_info("embedding", TensorProto.FLOAT, ["N", 8])],
        [numpy_helper.from_array(a, n) for a, n in
         [(conv_w, "conv_w"), (conv_b, "conv_b"), (fc_w, "fc_w"), (fc_b, "fc_b")]],
    )
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
    model.ir_version = 8
    onnx.checker.check_model(model)
    onnx.save(model, path)


build("tiny.onnx", 224)
build("tiny_32.onnx", 32)

meta = 'name = "tiny"\noutput_dim = 8\nlayout = "nchw"\nscale = 0.00392156862745098\nmean = [0.485, 0.456, 0.406]\nstd = [0.229, 0.224, 0.225]\n'
for stem in ["tiny", "tiny_32"]:
    with open(stem + ".toml", "w") as f:
        f.write(meta)

y, x = np.mgrid[0:224, 0:224]
img = np.stack([(x * 7 + y * 13 + c * 50) % 256 for c in range(3)], axis=0).astype(np.float64)
mean = np.array([0.485, 0.456, 0.406])[:, None, None]
std = np.array([0.229, 0.224, 0.225])[:, None, None]
inp = ((img * 0.00392156862745098 - mean) / std).astype(np.float32)[None]
sess = ort.InferenceSession("tiny.onnx", providers=["CPUExecutionProvider"])
out = sess.run(None, {"input": inp})[0][0]
with open("tiny_golden.json", "w") as f:
    json.dump([float(v) for v in out], f, indent=1)
print(out)
