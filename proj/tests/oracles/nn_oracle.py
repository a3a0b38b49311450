# Copyright 2026 The TaDiCodec-desk Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Independent torch oracle for attention, RMS normalization, rotary
embeddings and cross-entropy. Prints the values frozen in
tests/test_autograd.cpp. Inputs use the same closed-form fill as the tests:
fill(rows, cols, k)[i] = 0.8 * sin(0.37 * i + 1.1 * k), i the row-major index.
"""
import torch
import torch.nn.functional as F

torch.set_default_dtype(torch.float64)


def fill(rows, cols, k):
    i = torch.arange(rows * cols, dtype=torch.float64)
    return (0.8 * torch.sin(0.37 * i + 1.1 * k)).reshape(rows, cols)


def show(name, t):
    vals = ", ".join(f"{v:.17g}" for v in t.flatten().tolist())
    print(f"{name} = {{{vals}}};")


def attention():
    rows, nh, nkv, dh = 5, 2, 1, 4
    q = fill(rows, nh * dh, 1).requires_grad_()
    k = fill(rows, nkv * dh, 2).requires_grad_()
    v = fill(rows, nkv * dh, 3).requires_grad_()
    qh = q.reshape(rows, nh, dh).transpose(0, 1)
    kh = k.reshape(rows, nkv, dh).transpose(0, 1).expand(nh, rows, dh)
    vh = v.reshape(rows, nkv, dh).transpose(0, 1).expand(nh, rows, dh)
    o = F.scaled_dot_product_attention(qh, kh, vh, is_causal=True).transpose(0, 1).reshape(rows, nh * dh)
    (o * fill(rows, nh * dh, 4)).sum().backward()
    show("kAttnOut", o.detach())
    show("kAttnDq", q.grad)
    show("kAttnDk", k.grad)
    show("kAttnDv", v.grad)


def rmsnorm():
    x = fill(3, 6, 5).requires_grad_()
    y = x / torch.sqrt((x * x).mean(dim=1, keepdim=True) + 1e-6)
    (y * fill(3, 6, 6)).sum().backward()
    show("kRmsOut", y.detach())
    show("kRmsDx", x.grad)


def rope():
    rows, nh, dh = 2, 2, 4
    x = fill(rows, nh * dh, 7)
    pos = torch.tensor([3.0, 7.0])
    inv = 10000.0 ** (-torch.arange(0, dh, 2, dtype=torch.float64) / dh)
    ang = pos[:, None] * inv[None, :]  # rows x dh/2
    rot = torch.polar(torch.ones_like(ang), ang)[:, None, :]
    xc = torch.view_as_complex(x.reshape(rows, nh, dh // 2, 2).contiguous())
    show("kRopeOut", torch.view_as_real(xc * rot).reshape(rows, nh * dh))


def cross_entropy():
    logits = (3.0 * fill(3, 5, 8)).requires_grad_()
    targets = torch.tensor([1, 4, -1])
    loss = F.cross_entropy(logits, targets, ignore_index=-1)
    loss.backward()
    print(f"kCeLoss = {loss.item():.17g};")
    show("kCeGrad", logits.grad)


if __name__ == "__main__":
    attention()
    rmsnorm()
    rope()
    cross_entropy()
