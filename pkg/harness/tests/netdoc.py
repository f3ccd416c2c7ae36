"""Tiny network-description documents used across harness tests."""

def tiny_net_doc(name="tiny", width=4, spatial=6):
    return {
        "name": name,
        "input": {"channels": 3, "spatial": spatial},
        "layers": [
            {"id": "c0", "type": "conv", "n": width, "m": 3, "k": 3, "s": 1,
             "p": 1, "g": 1, "ip": spatial},
            {"id": "c1", "type": "conv", "n": width, "m": width, "k": 3, "s": 1,
             "p": 1, "g": 1, "ip": spatial},
        ],
        "edges": [{"from": "c0", "to": "c1", "mode": "passthrough"}],
    }


