"""Three brokers, a few clients, and the frames that cross each link.

    python demos/broker_tree.py
"""

from obskit.broker import Command, InProcFabric

fab = InProcFabric()
fab.add_broker("R")
fab.add_broker("A", "R")
fab.add_broker("B", "R")
op = fab.add_client("ratemon.port1", "A")
local = fab.add_client("dashboard", "A")
remote = fab.add_client("aggregator", "B")
remote.subscribe("alarm/*")
local.subscribe("alarm/*")


def link_counts():
    return {f"{c}->{p}": len(lg.frames) for (c, p), lg in fab.links.items()}


before = link_counts()
op.send("dashboard", "same broker")
print("same-broker SEND, new link frames:",
      {k: v - before[k] for k, v in link_counts().items()})

before = link_counts()
op.send("aggregator", "sibling broker")
print("cross-sibling SEND, new link frames:",
      {k: v - before[k] for k, v in link_counts().items()})

op.publish("alarm/congestion", '{"port": "port1"}')
print("aggregator got:", [f.text for f in remote.messages(Command.DELIVER, Command.DELIVER_PUB)])
print("dashboard got:", [f.text for f in local.messages(Command.DELIVER, Command.DELIVER_PUB)])

op.send("nobody", "?")
print("error:", [f.text for f in op.messages(Command.ERROR)])
