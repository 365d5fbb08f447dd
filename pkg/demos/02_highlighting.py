"""
Text highlighting over LLM responses
====================================

The three auxiliary highlight modes from the individual goal view, over
two canned responses: key phrases (shared vs unique), the most similar
cross-message sentence pairs, and the sentences least similar to all
others. Embeddings come from a scripted table so the output is stable.
"""

import json

from goaltrack import ScriptedMockBackend
from goaltrack.analysis import (
    extract_keyphrases,
    similarity_matrix,
    split_sentences,
    top_similar_pairs,
    unique_sentences,
)

response_a = (
    "Pack sunscreen and a hat. Check the weather before you leave. "
    "Lisbon is hilly, so bring good shoes."
)
response_b = (
    "Check the weather before you leave. Trams get crowded at noon. "
    "Bring good shoes for the hills."
)

# sentence embeddings, hand-placed so the geometry is easy to read:
# weather sentences identical, shoe sentences close, tram sentence alone
embeddings = {
    "Pack sunscreen and a hat.": (1.0, 0.1, 0.0),
    "Check the weather before you leave.": (0.0, 1.0, 0.0),
    "Lisbon is hilly, so bring good shoes.": (0.2, 0.0, 1.0),
    "Trams get crowded at noon.": (-0.9, 0.3, -0.2),
    "Bring good shoes for the hills.": (0.25, 0.05, 1.0),
}

script = {
    "keyphrases:a": json.dumps({"keyphrases": ["sunscreen", "good shoes", "the weather"]}),
    "keyphrases:b": json.dumps({"keyphrases": ["trams", "good shoes", "the weather"]}),
}

backend = ScriptedMockBackend(script=script, embeddings=embeddings)

# sentence segmentation: deterministic, offsets index the original text
sentences = split_sentences("a", response_a) + split_sentences("b", response_b)
for s in sentences:
    print(f"[{s.message_id}#{s.index}] {s.text}")

# key phrases, shared when two or more responses surface the same one
print("\nkey phrases:")
phrases = extract_keyphrases(
    [("a", response_a), ("b", response_b)],
    backend,
    tags={"a": "keyphrases:a", "b": "keyphrases:b"},
)
for phrase in phrases:
    label = "shared" if phrase.shared else "unique"
    print(f"  {phrase.message_id}: {phrase.phrase!r} ({label}, grounded={phrase.grounded})")

# cosine similarity over unit embeddings = plain dot products
sim = similarity_matrix(sentences, backend)

print("\nmost similar cross-message pairs:")
for pair in top_similar_pairs(sim, k=2):
    a, b = sim.sentences[pair.i], sim.sentences[pair.j]
    print(f"  {pair.score:.3f}  {a.text!r}  <->  {b.text!r}")

print("\nmost unique sentences (lowest mean similarity to all others):")
for index, mean in unique_sentences(sim, m=2):
    print(f"  {mean:+.3f}  {sim.sentences[index].text!r}")
