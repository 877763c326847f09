"""Independent reference implementations used only by the tests.

The base64 codec works bit-by-bit from the RFC 4648 alphabet and shares no
code with the package (which uses the stdlib ``base64`` module).
"""

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"


def b64encode(data: bytes) -> str:
    bits = "".join(f"{byte:08b}" for byte in data)
    bits += "0" * (-len(bits) % 6)
    chars = [ALPHABET[int(bits[i:i + 6], 2)] for i in range(0, len(bits), 6)]
    chars += ["="] * (-len(chars) % 4)
    return "".join(chars)


def b64decode(text: str) -> bytes:
    if len(text) % 4:
        raise ValueError("length not a multiple of 4")
    stripped = text.rstrip("=")
    if len(text) - len(stripped) > 2:
        raise ValueError("too much padding")
    bits = "".join(f"{ALPHABET.index(c):06b}" for c in stripped)
    usable = len(bits) - len(bits) % 8
    return bytes(int(bits[i:i + 8], 2) for i in range(0, usable, 8))


# Course of Action relationship targets, transcribed by hand from the
# STIX 2.1 Course of Action relationship table.
COA_RELATIONSHIP_TABLE = {
    ("investigates", "indicator"): "clean",
    ("mitigates", "attack-pattern"): "clean",
    ("mitigates", "indicator"): "clean",
    ("mitigates", "malware"): "clean",
    ("mitigates", "tool"): "clean",
    ("mitigates", "vulnerability"): "clean",
    ("remediates", "malware"): "clean",
    ("remediates", "vulnerability"): "clean",
}
RELATIONSHIP_TYPES = ("investigates", "mitigates", "remediates", "related-to")
TARGET_TYPES = ("attack-pattern", "indicator", "malware", "tool", "vulnerability", "identity")


def expected_relationship_outcome(rel_type: str, target_type: str) -> str:
    if rel_type == "related-to":
        return "clean"
    return COA_RELATIONSHIP_TABLE.get((rel_type, target_type), "warning")
