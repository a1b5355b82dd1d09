# Copyright 2026 The mxvit Authors
# SPDX-License-Identifier: Apache-2.0
"""Trains the bundled toy ViT on synthetic shapes and writes the model and
evaluation set in the mxvit on-disk layout.

The outputs are committed under data/; this script only needs to run again
when the model itself changes.

    python3 scripts/train_toy_vit.py --out data
"""

import argparse
import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

IMAGE = 16
PATCH = 4
DIM = 32
HEADS = 4
MLP = 128
LAYERS = 2
CLASSES = 4
CLASS_NAMES = ["square", "disk", "hbar", "vbar"]
EPS = 1e-6


def draw(kind, rng):
    img = np.zeros((IMAGE, IMAGE), dtype=np.float64)
    yy, xx = np.mgrid[0:IMAGE, 0:IMAGE]
    if kind == 0:
        s = rng.integers(6, 11)
        y, x = rng.integers(0, IMAGE - s + 1, size=2)
        img[y:y + s, x:x + s] = 1.0
    elif kind == 1:
        r = rng.uniform(3.5, 5.5)
        cy, cx = rng.uniform(r, IMAGE - r, size=2)
        img[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 1.0
    elif kind == 2:
        h = rng.integers(2, 4)
        w = rng.integers(9, 15)
        y = rng.integers(0, IMAGE - h + 1)
        x = rng.integers(0, IMAGE - w + 1)
        img[y:y + h, x:x + w] = 1.0
    else:
        h = rng.integers(9, 15)
        w = rng.integers(2, 4)
        y = rng.integers(0, IMAGE - h + 1)
        x = rng.integers(0, IMAGE - w + 1)
        img[y:y + h, x:x + w] = 1.0
    img *= rng.uniform(0.6, 1.0)
    img += rng.normal(0.0, 0.05, size=img.shape)
    return img


def make_set(n, seed):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % CLASSES
    rng.shuffle(labels)
    images = np.stack([draw(int(k), rng) for k in labels])
    return images.astype(np.float32), labels


def patchify(x):
    b = x.shape[0]
    g = IMAGE // PATCH
    x = x.reshape(b, g, PATCH, g, PATCH).permute(0, 1, 3, 2, 4)
    return x.reshape(b, g * g, PATCH * PATCH)


class Block(nn.Module):
    """Pre-norm block in the layout of the figure: B_n = LN(B_o + X_n),
    O = D + B_n."""

    def __init__(self):
        super().__init__()
        self.ln1 = nn.LayerNorm(DIM, eps=EPS)
        dk = DIM // HEADS
        self.wq = nn.ModuleList(nn.Linear(DIM, dk) for _ in range(HEADS))
        self.wk = nn.ModuleList(nn.Linear(DIM, dk) for _ in range(HEADS))
        self.wv = nn.ModuleList(nn.Linear(DIM, dk) for _ in range(HEADS))
        self.wo = nn.Linear(DIM, DIM)
        self.ln2 = nn.LayerNorm(DIM, eps=EPS)
        self.wu = nn.Linear(DIM, MLP)
        self.wd = nn.Linear(MLP, DIM)

    def forward(self, x):
        xn = self.ln1(x)
        dk = DIM // HEADS
        heads = []
        for i in range(HEADS):
            q, k, v = self.wq[i](xn), self.wk[i](xn), self.wv[i](xn)
            a = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dk), dim=-1)
            heads.append(a @ v)
        bo = self.wo(torch.cat(heads, dim=-1))
        bn = self.ln2(bo + xn)
        d = self.wd(nn.functional.gelu(self.wu(bn)))
        return d + bn


class ToyViT(nn.Module):
    def __init__(self):
        super().__init__()
        tokens = (IMAGE // PATCH) ** 2 + 1
        self.embed = nn.Linear(PATCH * PATCH, DIM)
        self.cls = nn.Parameter(torch.randn(DIM) * 0.5)
        self.pos = nn.Parameter(torch.randn(tokens, DIM) * 0.1)
        self.blocks = nn.ModuleList(Block() for _ in range(LAYERS))
        self.norm = nn.LayerNorm(DIM, eps=EPS)
        self.head = nn.Linear(DIM, CLASSES)

    def forward(self, img):
        p = self.embed(patchify(img))
        cls = self.cls.expand(p.shape[0], 1, DIM)
        x = torch.cat([cls, p], dim=1) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return self.head(self.norm(x[:, 0]))


def tensors(model):
    out = {
        "embed.weight": model.embed.weight,
        "embed.bias": model.embed.bias,
        "cls_token": model.cls,
        "pos_embed": model.pos,
        "norm.gamma": model.norm.weight,
        "norm.beta": model.norm.bias,
        "head.weight": model.head.weight,
        "head.bias": model.head.bias,
    }
    for li, blk in enumerate(model.blocks):
        p = f"blocks.{li}."
        out[p + "ln1.gamma"] = blk.ln1.weight
        out[p + "ln1.beta"] = blk.ln1.bias
        for h in range(HEADS):
            for name, mods in (("q", blk.wq), ("k", blk.wk), ("v", blk.wv)):
                out[f"{p}attn.head{h}.w{name}"] = mods[h].weight
                out[f"{p}attn.head{h}.b{name}"] = mods[h].bias
        out[p + "attn.wo"] = blk.wo.weight
        out[p + "attn.bo"] = blk.wo.bias
        out[p + "ln2.gamma"] = blk.ln2.weight
        out[p + "ln2.beta"] = blk.ln2.bias
        out[p + "mlp.wu"] = blk.wu.weight
        out[p + "mlp.bu"] = blk.wu.bias
        out[p + "mlp.wd"] = blk.wd.weight
        out[p + "mlp.bd"] = blk.wd.bias
    return out


def write_model(model, root):
    root.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, t in tensors(model).items():
        arr = t.detach().cpu().numpy().astype("<f4")
        data = arr.tobytes(order="C")
        fname = name + ".f32"
        (root / fname).write_bytes(data)
        entries[name] = {
            "file": fname,
            "shape": list(arr.shape),
            "digest": "sha256:" + hashlib.sha256(data).hexdigest(),
        }
    manifest = {
        "format": "mxvit-manifest-1",
        "model": {
            "image_size": IMAGE,
            "patch_size": PATCH,
            "channels": 1,
            "dim": DIM,
            "heads": HEADS,
            "mlp_dim": MLP,
            "layers": LAYERS,
            "classes": CLASSES,
        },
        "tensors": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def write_dataset(images, labels, root):
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "labels.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["file", "label"])
        for i, (img, lab) in enumerate(zip(images, labels)):
            fname = f"sample_{i:04d}.f32"
            (root / fname).write_bytes(img.astype("<f4").tobytes())
            w.writerow([fname, int(lab)])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--train", type=int, default=6000)
    ap.add_argument("--eval", type=int, default=256)
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    xtr, ytr = make_set(args.train, args.seed)
    xev, yev = make_set(args.eval, args.seed + 1000)
    xtr_t, ytr_t = torch.tensor(xtr), torch.tensor(ytr)
    xev_t, yev_t = torch.tensor(xev), torch.tensor(yev)

    model = ToyViT()
    opt = torch.optim.AdamW(model.parameters(), lr=2e-3, weight_decay=1e-2)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    loss_fn = nn.CrossEntropyLoss()
    for epoch in range(args.epochs):
        model.train()
        perm = torch.randperm(len(xtr_t))
        for i in range(0, len(perm), 128):
            idx = perm[i:i + 128]
            opt.zero_grad()
            loss = loss_fn(model(xtr_t[idx]), ytr_t[idx])
            loss.backward()
            opt.step()
        sched.step()
        model.eval()
        with torch.no_grad():
            logits = model(xev_t)
            acc = (logits.argmax(1) == yev_t).float().mean().item()
            top2 = logits.topk(2, dim=1).values
            margin = (top2[:, 0] - top2[:, 1]).min().item()
        print(f"epoch {epoch:3d} loss {loss.item():.4f} eval acc {acc:.4f} "
              f"min margin {margin:.3f}")

    write_model(model, args.out / "toy_vit")
    write_dataset(xev, yev, args.out / "toy_eval")


if __name__ == "__main__":
    main()
