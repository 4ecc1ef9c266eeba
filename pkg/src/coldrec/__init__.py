"""Cold-start recommendation over a collaborative knowledge graph:
a pretrained knowledge-graph embedding, an attention-based propagation
model, two cooperating meta update rules, and an adaptive task
scheduler, with a batch CLI pipeline on top.
"""

__version__ = "0.1.0"
