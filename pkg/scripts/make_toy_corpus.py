"""Write a directory of speech-like synthetic WAV clips."""

import argparse
from pathlib import Path

from scoredec.audio_io import write_wav
from scoredec.synth import speech_like


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--rate", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--offset", type=int, default=0, help="index of the first clip")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.offset, args.offset + args.n):
        w = speech_like(args.duration, args.rate, seed=args.seed * 100003 + i)
        write_wav(w, out / f"clip_{i:04d}.wav")


if __name__ == "__main__":
    main()
