#!/usr/bin/env python3
"""Generates the bundled corpus: seeded encyclopedia-style prose, ~1.5 MB.

Run from the repository root: python3 scripts/make_corpus.py
"""
import random

OUT = "data/corpus.txt"
TARGET_BYTES = 1_500_000

FIRST = ["Alma", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo",
         "Ines", "Jonas", "Katya", "Lars", "Mina", "Nadia", "Oskar", "Petra",
         "Quentin", "Rosa", "Stefan", "Tilda", "Ulric", "Vera", "Wendel", "Yara"]
LAST = ["Aldermann", "Brecht", "Castellan", "Dvorak", "Eisler", "Falk",
        "Grimaldi", "Hartwig", "Ivanova", "Jelinek", "Krause", "Lindqvist",
        "Moravec", "Novak", "Olsen", "Pavel", "Richter", "Sorensen",
        "Teller", "Ulanova", "Vogel", "Weiss"]
CITY = ["Aldburg", "Bravik", "Corun", "Delvan", "Eastmoor", "Fenwick",
        "Gollheim", "Harstad", "Ilmenau", "Jorvik", "Kestral", "Lindenfeld",
        "Morvane", "Northgate", "Ostrava", "Pellworm", "Quendale", "Ravensholt"]
FIELD = ["astronomy", "botany", "cartography", "chemistry", "geology",
         "linguistics", "mathematics", "medicine", "meteorology", "music theory",
         "philosophy", "physics", "zoology", "archaeology", "economics"]
WORK = ["treatise", "atlas", "catalogue", "monograph", "symphony", "survey",
        "lexicon", "almanac", "commentary", "chronicle"]
ADJ = ["influential", "controversial", "celebrated", "obscure", "pioneering",
       "meticulous", "unfinished", "widely cited", "forgotten", "definitive"]
RIVER = ["Arne", "Belva", "Corre", "Dane", "Elve", "Fyrn", "Grau", "Hale"]
YEAR = (1540, 1930)

SENT = [
    "{F} {L} was born in {C} in {Y} and devoted much of a long career to {D}.",
    "The {A} {W} on {D} that {L} published in {Y} reshaped debate across {C} for a generation.",
    "In {Y} the town of {C} established a small academy where {D} and {D2} were taught side by side.",
    "{F} {L} travelled down the river {R} in {Y}, recording observations that later filled an {A} {W}.",
    "Scholars in {C} long disputed whether the {W} attributed to {L} was genuine.",
    "After settling in {C}, {L} corresponded with {F2} {L2} about open problems in {D}.",
    "The {Y} flood of the {R} destroyed the archive at {C}, and with it the only copy of an {A} {W} on {D}.",
    "A lecture that {F} {L} delivered at {C} in {Y} is often cited as the origin of modern {D}.",
    "Little is known of {L}'s early life beyond a baptismal record from {C} dated {Y}.",
    "The {C} school of {D} favoured careful measurement over speculation, a habit traced to {L}.",
    "{F} {L}'s {A} {W}, printed at {C} in {Y}, ran to three volumes and sold poorly.",
    "Between {Y} and {Y2}, {L} catalogued hundreds of specimens along the {R} valley.",
    "Critics in {C} dismissed the {W} as {A}, yet students of {D} still consult it.",
    "The bridge at {C}, finished in {Y}, was the first to survive the spring ice of the {R}.",
    "In later years {L} abandoned {D} for {D2}, a change biographers still puzzle over.",
    "An anonymous {W} from {C}, dated {Y}, preserves the only contemporary account of {L}'s experiments.",
    "{F2} {L2} of {C} completed the {A} {W} that {L} left unfinished at death in {Y}.",
    "Records from {C} show that {L} taught {D} to three generations of students.",
    "The {R} freezes early at {C}, a fact {L} used in {Y} to test a theory of {D}.",
    "Though born in {C}, {L} spent the decisive years of a career in {D} at {C2}.",
]


def sentence(rng: random.Random) -> str:
    t = rng.choice(SENT)
    y = rng.randint(*YEAR)
    return (t.replace("{F2}", rng.choice(FIRST)).replace("{L2}", rng.choice(LAST))
             .replace("{C2}", rng.choice(CITY)).replace("{D2}", rng.choice(FIELD))
             .replace("{Y2}", str(y + rng.randint(1, 40)))
             .replace("{F}", rng.choice(FIRST)).replace("{L}", rng.choice(LAST))
             .replace("{C}", rng.choice(CITY)).replace("{D}", rng.choice(FIELD))
             .replace("{W}", rng.choice(WORK)).replace("{A}", rng.choice(ADJ))
             .replace("{R}", rng.choice(RIVER)).replace("{Y}", str(y)))


def main() -> None:
    rng = random.Random(20260823)
    parts = []
    size = 0
    while size < TARGET_BYTES:
        para = " ".join(sentence(rng) for _ in range(rng.randint(3, 7))) + "\n\n"
        parts.append(para)
        size += len(para.encode())
    with open(OUT, "w", encoding="utf-8", newline="\n") as f:
        f.write("".join(parts))
    print(f"wrote {size} bytes to {OUT}")


if __name__ == "__main__":
    main()
