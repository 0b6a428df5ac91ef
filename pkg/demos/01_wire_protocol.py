"""
Talking to the signal hub
=========================

The hub is a whiteboard: clients SET/GET last values and PUB/SUB on topics.
Everything travels as one text line per frame.
"""
from gridloop.hub import Hub, Measurement, encode_frame, parse_frame

# a frame is just a line of text
line = b"PUB prismes/pv/power 17 1000000 3512.5\n"
frame = parse_frame(line)
print(frame)
print(encode_frame(frame))

# drive a hub directly: two clients, one subscribed with a wildcard
hub = Hub()
scada = hub.connect("scada")
sim = hub.connect("sim")
hub.subscribe(sim, "prismes/*/power")

count = hub.publish("prismes/pv/power", Measurement("prismes/pv/power", 3512.5, 1_000_000, 17))
print("delivered to", count, "subscription(s)")
print("sim received:", list(sim.received))

# PUB also leaves the value on the whiteboard for late joiners
print("last value:", hub.get("prismes/pv/power"))

# the same thing over the wire, byte for byte
for raw in [b"GET prismes/pv/power\n", b"GET prismes/wind/power\n", b"PING\n", b"PUB bad topic! 1 1 0\n"]:
    hub.handle_bytes(scada, raw)
for reply in scada.received:
    print(encode_frame(reply).decode(), end="")
