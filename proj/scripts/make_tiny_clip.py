"""Writes a tiny random CLIP checkpoint plus reference features for tests.

Usage: python scripts/make_tiny_clip.py tests/fixtures/tiny_clip
"""
import json
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from transformers import CLIPConfig, CLIPModel

MEAN = [0.48145466, 0.4578275, 0.40821073]
STD = [0.26862954, 0.26130258, 0.27577711]


def features(out):
    # Newer transformers return a model output rather than a tensor.
    return out if isinstance(out, torch.Tensor) else out.pooler_output


def main(out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    cfg = CLIPConfig(
        text_config=dict(vocab_size=49408, hidden_size=64, intermediate_size=128, num_hidden_layers=2,
                         num_attention_heads=4, max_position_embeddings=77, eos_token_id=49407,
                         bos_token_id=49406, pad_token_id=0),
        vision_config=dict(hidden_size=64, intermediate_size=128, num_hidden_layers=2, num_attention_heads=4,
                           image_size=32, patch_size=8),
        projection_dim=512,
    )
    model = CLIPModel(cfg).eval().double()
    # Random init leaves layer norms at identity; perturb them so the test covers their parameters.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "layer_norm" in name or "layernorm" in name:
                p.add_(0.1 * torch.randn_like(p))
    model.float().save_pretrained(out, safe_serialization=True)
    model = CLIPModel.from_pretrained(out).eval().double()

    rng = np.random.default_rng(0)
    tokens = [49406] + [int(t) for t in rng.integers(1, 49406, size=12)] + [49407] + [0] * 63
    image = rng.uniform(0.0, 1.0, size=(40, 40, 3))

    with torch.no_grad():
        text = features(model.get_text_features(input_ids=torch.tensor([tokens])))[0]
        x = torch.tensor(image).permute(2, 0, 1)[None]
        x = F.interpolate(x, size=(32, 32), mode="bilinear", align_corners=False, antialias=False)
        x = (x - torch.tensor(MEAN, dtype=x.dtype)[None, :, None, None]) / torch.tensor(STD, dtype=x.dtype)[
            None, :, None, None]
        vis = features(model.get_image_features(pixel_values=x))[0]

    ref = {
        "tokens": tokens,
        "image_hw": [40, 40],
        "image": image.reshape(-1).tolist(),
        "text_feature": text.tolist(),
        "image_feature": vis.tolist(),
    }
    (out / "reference.json").write_text(json.dumps(ref))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/tiny_clip")
