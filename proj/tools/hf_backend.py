# Copyright 2026 The langpref Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""JSON-lines model server backed by a transformers causal language model.

Usage:
  python3 tools/hf_backend.py --model <name-or-path> [--device cpu]
  python3 tools/hf_backend.py --tiny-random [--seed 0]

Reads one JSON request per line on stdin and writes one JSON response per
line on stdout. Supported ops: info, next_token, layer_trace,
sequence_logprob, count_tokens, generate. With --tiny-random a small
randomly initialised GPT-2 with a byte tokenizer is built in memory, which
exercises the full protocol without downloading weights.
"""

import argparse
import json
import math
import sys

import torch


class ByteTokenizer:
    """One token per UTF-8 byte."""

    vocab_size = 256

    def encode(self, text):
        return list(text.encode("utf-8"))

    def decode(self, ids):
        return bytes(ids).decode("utf-8", errors="replace")


class HfTokenizer:
    def __init__(self, tok):
        self.tok = tok
        self.vocab_size = len(tok)

    def encode(self, text):
        return self.tok.encode(text, add_special_tokens=False)

    def decode(self, ids):
        return self.tok.decode(ids)


def build_tiny_random(seed):
    from transformers import GPT2Config, GPT2LMHeadModel

    torch.manual_seed(seed)
    config = GPT2Config(vocab_size=256, n_positions=4096, n_embd=64, n_layer=4, n_head=4,
                        bos_token_id=0, eos_token_id=0)
    return GPT2LMHeadModel(config).eval(), ByteTokenizer(), "tiny-random-gpt2"


def build_pretrained(name, device):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tok = AutoTokenizer.from_pretrained(name)
    model = AutoModelForCausalLM.from_pretrained(name, torch_dtype=torch.float32)
    return model.to(device).eval(), HfTokenizer(tok), name


def final_norm(model):
    for path in ("transformer.ln_f", "model.norm", "gpt_neox.final_layer_norm",
                 "model.decoder.final_layer_norm"):
        obj = model
        try:
            for part in path.split("."):
                obj = getattr(obj, part)
            return obj
        except AttributeError:
            continue
    return None


class Server:
    def __init__(self, model, tokenizer, model_id, device):
        self.model = model
        self.tok = tokenizer
        self.model_id = model_id
        self.device = device
        self.norm = final_norm(model)
        self.head = model.get_output_embeddings()
        self.layers = model.config.num_hidden_layers

    def ids(self, text):
        ids = self.tok.encode(text)
        if not ids:
            raise ValueError("empty prompt")
        return torch.tensor([ids], device=self.device)

    @torch.no_grad()
    def forward(self, text, hidden=False):
        return self.model(self.ids(text), output_hidden_states=hidden)

    def info(self, _req):
        return {"model_id": self.model_id, "layer_count": self.layers, "max_in_flight": 1,
                "capabilities": {"tokenizer": True, "layer_trace": True,
                                 "sequence_logprob": True}}

    def next_token(self, req):
        logits = self.forward(req["prompt"]).logits[0, -1].float()
        logp = torch.log_softmax(logits, dim=-1)
        probs = logp.exp()
        entropy = float(-(probs * logp).sum())
        top_k = min(int(req.get("top_k", 20)), probs.numel())
        chosen = set(torch.topk(probs, top_k).indices.tolist())
        for cand in req.get("candidates", []):
            cid = self.tok.encode(cand)
            if len(cid) == 1:
                chosen.add(cid[0])
        dist = [{"id": i, "text": self.tok.decode([i]), "prob": float(probs[i])}
                for i in sorted(chosen)]
        return {"distribution": dist, "vocab_size": int(probs.numel()), "complete": False,
                "entropy": entropy}

    def layer_trace(self, req):
        hidden = self.forward(req["prompt"], hidden=True).hidden_states
        trace = []
        # hidden[0] is the embedding output; the last entry is already normed.
        for layer, h in enumerate(hidden[1:], start=1):
            state = h[0, -1]
            if self.norm is not None and layer < len(hidden) - 1:
                state = self.norm(state)
            top = int(torch.argmax(self.head(state)))
            trace.append(self.tok.decode([top]))
        return {"trace": trace}

    def sequence_logprob(self, req):
        prompt_ids = self.tok.encode(req["prompt"])
        cont_ids = self.tok.encode(req["continuation"])
        if not prompt_ids or not cont_ids:
            raise ValueError("empty prompt or continuation")
        ids = torch.tensor([prompt_ids + cont_ids], device=self.device)
        with torch.no_grad():
            logp = torch.log_softmax(self.model(ids).logits[0].float(), dim=-1)
        start = len(prompt_ids)
        total = sum(float(logp[start + i - 1, t]) for i, t in enumerate(cont_ids))
        return {"logprob": total}

    def count_tokens(self, req):
        return {"count": len(self.tok.encode(req["text"]))}

    def generate(self, req):
        ids = self.tok.encode(req["prompt"])
        max_new = int(req.get("max_new_tokens", 64))
        out = []
        with torch.no_grad():
            for _ in range(max_new):
                logits = self.model(torch.tensor([ids + out], device=self.device)).logits
                out.append(int(torch.argmax(logits[0, -1])))
                if self.tok.decode(out).endswith("\n"):
                    break
        return {"text": self.tok.decode(out).strip()}

    def handle(self, req):
        op = req.get("op")
        fn = getattr(self, op, None) if op in OPS else None
        if fn is None:
            return {"error": "unknown op " + str(op), "retryable": False}
        try:
            return fn(req)
        except (KeyError, ValueError) as exc:
            return {"error": "bad request: " + str(exc), "retryable": False}
        except RuntimeError as exc:
            return {"error": str(exc), "retryable": True}


OPS = {"info", "next_token", "layer_trace", "sequence_logprob", "count_tokens", "generate"}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="model name or local path")
    group.add_argument("--tiny-random", action="store_true",
                       help="use an in-memory random GPT-2 with a byte tokenizer")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    torch.set_num_threads(args.threads)
    if args.tiny_random:
        model, tok, model_id = build_tiny_random(args.seed)
    else:
        model, tok, model_id = build_pretrained(args.model, args.device)
    server = Server(model, tok, model_id, args.device)

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"error": "malformed json: " + str(exc), "retryable": False}
        else:
            resp = server.handle(req)
        print(json.dumps(resp), flush=True)


if __name__ == "__main__":
    main()
