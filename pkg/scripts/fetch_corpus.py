#!/usr/bin/env python3
"""Fetch a larger public-domain text corpus for full-scale runs.

The bundled data/sample_corpus.txt (~150KB, generated by
make_sample_corpus.py) is enough for the test and acceptance suites. For
longer training runs, any UTF-8 text of 500KB or more works; this script
downloads one from Project Gutenberg and reports its hash so runs can be
pinned to exact corpus bytes.

Usage: python3 scripts/fetch_corpus.py [url] [out_path]
"""

import hashlib
import sys
import urllib.request

# Middlemarch, plain-text UTF-8 (public domain)
DEFAULT_URL = "https://www.gutenberg.org/cache/epub/145/pg145.txt"


def main(url=DEFAULT_URL, out_path="data/corpus.txt"):
    print(f"fetching {url}")
    with urllib.request.urlopen(url) as r:
        data = r.read()
    if len(data) < 500_000:
        print(f"warning: only {len(data)} bytes; full runs want >= 500KB", file=sys.stderr)
    with open(out_path, "wb") as f:
        f.write(data)
    print(f"{out_path}: {len(data)} bytes")
    print(f"sha256: {hashlib.sha256(data).hexdigest()}")


if __name__ == "__main__":
    main(*sys.argv[1:])
