import argparse
import json

from speaker_fusion import read_archive, read_archive_header


def main(args: argparse.Namespace):
    header = read_archive_header(args.path)
    print(json.dumps(header, indent=2, sort_keys=True))
    if args.rows:
        matrix, _ = read_archive(args.path)
        for row in matrix[: args.rows]:
            print(" ".join(f"{value:.4f}" for value in row))


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("path", type=str)
    parser.add_argument("--rows", type=int, default=0, help="Also print the first N rows")
    args = parser.parse_args()
    main(args)
