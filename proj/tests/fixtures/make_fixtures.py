#!/usr/bin/env python3
"""Regenerates the checked-in CFNN test fixtures.

Writes into this directory:
  zero_3d.cfw, zero_2d.cfw        all-zero networks with identity normalization
  golden_3d.cfw / golden_3d.ckv   random weights plus reference forward outputs
  golden_2d.cfw / golden_2d.ckv
  synthetic_T.cfw                 network trained on the synthetic dataset

The trained model needs NDT1 tensors from the C++ tool:
  xfc synth --outdir DIR
  xfc export-training --manifest DIR/manifest.txt --target T -o DIR/T.ndt
  python3 make_fixtures.py --ndt DIR/T.ndt
Without --ndt only the deterministic fixtures are rewritten.
"""

import argparse
import struct
import time
import zlib
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

HERE = Path(__file__).resolve().parent


class Cfnn(nn.Module):
    def __init__(self, ndim, c_in, hidden, reduction, c_out, kernel=3):
        super().__init__()
        conv = nn.Conv3d if ndim == 3 else nn.Conv2d
        pad = kernel // 2
        self.ndim = ndim
        self.conv1 = conv(c_in, hidden, kernel, padding=pad)
        self.dw = conv(hidden, hidden, kernel, padding=pad, groups=hidden)
        self.pw = conv(hidden, hidden, 1)
        self.fc1 = nn.Linear(hidden, hidden // reduction)
        self.fc2 = nn.Linear(hidden // reduction, hidden)
        self.conv2 = conv(hidden, c_out, kernel, padding=pad)

    def forward(self, x):
        h = F.relu(self.conv1(x))
        h = F.relu(self.pw(self.dw(h)))
        dims = tuple(range(2, 2 + self.ndim))
        avg = h.mean(dim=dims)
        mx = h.amax(dim=dims)
        gate = torch.sigmoid(self.fc2(F.relu(self.fc1(avg))) + self.fc2(F.relu(self.fc1(mx))))
        h = h * gate.reshape(gate.shape + (1,) * self.ndim)
        return self.conv2(h)

    def blobs(self):
        out = []
        for layer in (self.conv1, self.dw, self.pw, self.fc1, self.fc2, self.conv2):
            out.append(layer.weight.detach().double().numpy().reshape(-1))
            out.append(layer.bias.detach().double().numpy().reshape(-1))
        return out


def write_cfw(path, net, hidden, reduction, n_anchors, in_norm, out_norm, kernel=3):
    ndim = net.ndim
    c_in, c_out = n_anchors * ndim, ndim
    body = bytearray(b"CFW1")
    body += struct.pack("<IB6H", 1, ndim, c_in, hidden, reduction, c_out, kernel, n_anchors)
    for off, scale in list(in_norm) + list(out_norm):
        body += struct.pack("<ff", off, scale)
    for blob in net.blobs():
        body += struct.pack("<Q", blob.size)
        body += blob.astype("<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path.write_bytes(bytes(body))
    print(f"wrote {path.name} ({len(body)} bytes)")


def ndt_record(arr):
    c, dims = arr.shape[0], arr.shape[1:]
    out = bytearray(b"NDT1")
    out += struct.pack("<B", len(dims))
    out += struct.pack(f"<{len(dims)}Q", *dims)
    out += struct.pack("<II", c, 0)
    out += struct.pack("<ff", 0.0, 1.0) * c
    out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def read_ndt(path):
    raw = Path(path).read_bytes()
    assert raw[:4] == b"NDT1"
    ndim = raw[4]
    pos = 5
    dims = struct.unpack_from(f"<{ndim}Q", raw, pos)
    pos += 8 * ndim
    c_in, c_target = struct.unpack_from("<II", raw, pos)
    pos += 8
    norms = np.frombuffer(raw, "<f4", 2 * (c_in + c_target), pos).reshape(-1, 2)
    pos += 8 * (c_in + c_target)
    data = np.frombuffer(raw, "<f4", offset=pos).reshape((c_in + c_target,) + dims)
    return dims, c_in, c_target, norms, data


def zero_net(ndim, n_anchors, hidden=16, reduction=4):
    net = Cfnn(ndim, n_anchors * ndim, hidden, reduction, ndim)
    for p in net.parameters():
        nn.init.zeros_(p)
    return net


def golden(name, ndim, n_anchors, dims, hidden, reduction, seed, count=3):
    gen = torch.Generator().manual_seed(seed)
    net = Cfnn(ndim, n_anchors * ndim, hidden, reduction, ndim)
    with torch.no_grad():
        for p in net.parameters():
            p.copy_(0.1 * torch.randn(p.shape, generator=gen))
    # Round parameters to f32 first so the f64 reference sees the stored values.
    net = net.float()
    out_norm = [(0.25 * (i + 1), 1.5 + 0.5 * i) for i in range(ndim)]
    in_norm = [(0.0, 1.0)] * (n_anchors * ndim)
    write_cfw(HERE / f"{name}.cfw", net, hidden, reduction, n_anchors, in_norm, out_norm)
    ref = net.double()
    records = bytearray(b"CKV1") + struct.pack("<I", count)
    for _ in range(count):
        x = torch.randn((1, n_anchors * ndim) + dims, generator=gen).float()
        with torch.no_grad():
            y = ref(x.double())[0]
        y = torch.stack([y[c] * out_norm[c][1] + out_norm[c][0] for c in range(ndim)])
        records += ndt_record(x[0].numpy())
        records += ndt_record(y.float().numpy())
    (HERE / f"{name}.ckv").write_bytes(bytes(records))
    print(f"wrote {name}.ckv")


def train(ndt_path, hidden, reduction, epochs, seed, crop):
    torch.manual_seed(seed)
    dims, c_in, c_target, norms, data = read_ndt(ndt_path)
    ndim = len(dims)
    x = torch.from_numpy(data[:c_in].copy())[None]
    y = torch.from_numpy(data[c_in:].copy())[None]
    # Leading boundary planes hold raw values, not differences; keep them
    # out of the loss.
    mask = torch.ones((1, 1) + tuple(dims))
    for axis in range(ndim):
        idx = [slice(None)] * (ndim + 2)
        idx[axis + 2] = 0
        mask[tuple(idx)] = 0
    net = Cfnn(ndim, c_in, hidden, reduction, c_target)
    opt = torch.optim.Adam(net.parameters(), lr=2e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, epochs)
    start = time.time()
    for epoch in range(epochs):
        if crop and epoch < epochs - 50:
            sl = [slice(None), slice(None)]
            for n in dims:
                o = int(torch.randint(0, n - crop + 1, (1,)))
                sl.append(slice(o, o + crop))
            sl = tuple(sl)
            xb, yb, mb = x[sl], y[sl], mask[sl]
        else:
            xb, yb, mb = x, y, mask
        opt.zero_grad()
        loss = (((net(xb) - yb) ** 2) * mb).sum() / (mb.sum() * c_target)
        loss.backward()
        opt.step()
        sched.step()
        if epoch % 100 == 0 or epoch == epochs - 1:
            print(f"epoch {epoch} loss {loss.item():.5f} ({time.time() - start:.0f}s)")
    norm_list = [tuple(map(float, r)) for r in norms]
    write_cfw(HERE / "synthetic_T.cfw", net, hidden, reduction, c_in // ndim, norm_list[:c_in], norm_list[c_in:])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--ndt", help="NDT1 file for the trained synthetic model")
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--reduction", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=1500)
    ap.add_argument("--crop", type=int, default=32)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    torch.set_num_threads(1)

    write_cfw(HERE / "zero_3d.cfw", zero_net(3, 2), 16, 4, 2, [(0.0, 1.0)] * 6, [(0.0, 1.0)] * 3)
    write_cfw(HERE / "zero_2d.cfw", zero_net(2, 1), 16, 4, 1, [(0.0, 1.0)] * 2, [(0.0, 1.0)] * 2)
    golden("golden_3d", 3, 3, (16, 16, 16), 16, 4, seed=11)
    golden("golden_2d", 2, 2, (24, 32), 8, 2, seed=12)
    if args.ndt:
        train(args.ndt, args.hidden, args.reduction, args.epochs, args.seed, args.crop)


if __name__ == "__main__":
    main()
