#!/usr/bin/env python3
"""Regenerate src/builtin_data.inc from the shipped files under data/.

The compiled-in defaults must stay byte-identical to the data files; run this
after editing either the default templates or the profession catalog.
"""
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TEMPLATE_DIR = os.path.join(ROOT, "data", "templates", "default")
NAMES = [
    "initial",
    "feedback",
    "refine_with_feedback",
    "refine_without_feedback",
    "annotate_preference",
    "revise_preference",
]


def main() -> int:
    out = ["// Generated by tools/gen_builtin_data.py from the files under data/; do not edit by hand.\n"]
    for name in NAMES:
        with open(os.path.join(TEMPLATE_DIR, name + ".txt"), encoding="utf-8") as f:
            text = f.read()
        if ")PRSTPL(" in text:
            print(f"{name}.txt contains the raw-string delimiter", file=sys.stderr)
            return 1
        ident = "kBuiltin" + "".join(part.capitalize() for part in name.split("_"))
        out.append(f'inline constexpr const char {ident}[] = R"PRSTPL({text})PRSTPL";\n')

    with open(os.path.join(ROOT, "data", "professions.txt"), encoding="utf-8") as f:
        professions = [line.strip() for line in f if line.strip()]
    out.append("inline constexpr const char* kBuiltinProfessions[] = {\n")
    for prof in professions:
        escaped = prof.replace("\\", "\\\\").replace('"', '\\"')
        out.append(f'    "{escaped}",\n')
    out.append("};\n")

    with open(os.path.join(ROOT, "src", "builtin_data.inc"), "w", encoding="utf-8") as f:
        f.write("".join(out))
    print(f"wrote src/builtin_data.inc ({len(professions)} professions)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
