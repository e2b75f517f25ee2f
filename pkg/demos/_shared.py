"""A small hand-written instrument ontology reused across the demo scripts.

Two-to-three levels deep, with synonyms, definitions, semantic types, and a
few associative edges, so every library capability has something to chew on.
"""

from pathlib import Path

from ontoembed import ontograph

OUT = Path(__file__).parent / "out"

# (id, names, definitions, semantic types)
CONCEPTS = [
    ("I00", ["musical instrument"], ["a device created to make musical sounds"], ["artifact"]),
    ("I01", ["string instrument", "chordophone"],
     ["an instrument sounding through vibrating strings"], ["artifact"]),
    ("I02", ["wind instrument", "aerophone"],
     ["an instrument sounded by a vibrating column of air"], ["artifact"]),
    ("I03", ["percussion instrument"],
     ["an instrument sounded by being struck or shaken"], ["artifact"]),
    ("I04", ["bowed string instrument"], ["a string instrument played with a bow"], ["artifact"]),
    ("I05", ["plucked string instrument"],
     ["a string instrument whose strings are plucked"], ["artifact"]),
    ("I06", ["brass instrument"],
     ["a wind instrument sounded by lip vibration in a mouthpiece"], ["artifact"]),
    ("I07", ["reed instrument"], ["a wind instrument sounded through a reed"], ["artifact"]),
    ("I10", ["violin", "fiddle"], ["a small four-stringed bowed instrument"], ["artifact"]),
    ("I11", ["cello", "violoncello"], ["a large bowed instrument held between the knees"],
     ["artifact"]),
    ("I12", ["guitar"], ["a plucked instrument with six strings and a fretted neck"],
     ["artifact"]),
    ("I13", ["lute"], ["a plucked instrument with a pear shaped body"], ["artifact"]),
    ("I14", ["trumpet"], ["a brass instrument with three valves and a bright tone"],
     ["artifact"]),
    ("I15", ["trombone"], ["a brass instrument pitched with a telescoping slide"], ["artifact"]),
    ("I16", ["clarinet"], ["a single reed instrument with a cylindrical bore"], ["artifact"]),
    ("I17", ["oboe"], ["a double reed instrument with a conical bore"], ["artifact"]),
    ("I18", ["snare drum", "side drum"], ["a drum with wires stretched across its lower head"],
     ["artifact"]),
    ("I19", ["timpani", "kettledrums"], ["tuned drums with a bowl shaped copper shell"],
     ["artifact"]),
    ("I20", ["bow"], ["a tensioned stick of hair used to sound strings"], ["artifact"]),
    ("I21", ["reed"], ["a thin strip of cane that vibrates to start a note"], ["artifact"]),
]

EDGES = [
    ("I01", "I00", "isa"), ("I02", "I00", "isa"), ("I03", "I00", "isa"),
    ("I04", "I01", "isa"), ("I05", "I01", "isa"),
    ("I06", "I02", "isa"), ("I07", "I02", "isa"),
    ("I10", "I04", "isa"), ("I11", "I04", "isa"),
    ("I12", "I05", "isa"), ("I13", "I05", "isa"),
    ("I14", "I06", "isa"), ("I15", "I06", "isa"),
    ("I16", "I07", "isa"), ("I17", "I07", "isa"),
    ("I18", "I03", "isa"), ("I19", "I03", "isa"),
    ("I20", "I10", "part_of"), ("I20", "I11", "part_of"),
    ("I21", "I16", "part_of"), ("I21", "I17", "part_of"),
    ("I10", "I11", "related_to"), ("I14", "I15", "related_to"),
    ("I12", "I13", "related_to"), ("I18", "I19", "related_to"),
]


def concept_records():
    return [{"id": cid, "names": names, "definitions": defs, "semantic_types": types}
            for cid, names, defs, types in CONCEPTS]


def edge_records():
    return [{"source": s, "target": t, "label": label} for s, t, label in EDGES]


def write_graph_files(directory: Path) -> tuple[Path, Path]:
    """Write the demo ontology as the two JSONL dumps the loader expects."""
    import json

    directory.mkdir(parents=True, exist_ok=True)
    concepts_path = directory / "concepts.jsonl"
    edges_path = directory / "edges.jsonl"
    with open(concepts_path, "w", encoding="utf-8") as fh:
        for record in concept_records():
            fh.write(json.dumps(record) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for record in edge_records():
            fh.write(json.dumps(record) + "\n")
    return concepts_path, edges_path


def load_demo_graph() -> ontograph.OntologyGraph:
    concepts_path, edges_path = write_graph_files(OUT)
    return ontograph.load_graph(concepts_path, edges_path)
