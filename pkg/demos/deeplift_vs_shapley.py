"""
DeepLIFT and Shapley values on max(x0, x1)
------------------------------------------

With x = (1, 3) and reference (0, 0), DeepLIFT's max rule hands the whole
change to x1, the larger input. Shapley values average over both orders in
which the inputs can be switched on and give x0 some credit: switched on
first, it lifts the output from 0 to 1.
"""

from esv.deeplift import MicroDag, Node, compare_rules

dag = MicroDag([Node("input"), Node("input"), Node("max", (0, 1))])
cmp = compare_rules(dag, [1.0, 3.0], [0.0, 0.0])
print(cmp.table())

# a linear graph leaves nothing to disagree about
linear = MicroDag([Node("input"), Node("input"), Node("linear", (0, 1), (2.0, -1.0), 0.5)])
print()
print(compare_rules(linear, [1.0, 1.0], [0.25, -2.0]).table())

# a small rectifier network: relu(a) = max(a, 0) needs a constant-zero parent
net = MicroDag([
    Node("input"), Node("input"), Node("input"),
    Node("linear", (0,), (0.0,), 0.0),                      # constant 0
    Node("linear", (0, 1), (1.0, 1.0), -1.0),
    Node("linear", (1, 2), (1.0, -2.0), 0.5),
    Node("max", (4, 3)),                                    # relu
    Node("max", (5, 3)),                                    # relu
    Node("linear", (6, 7), (1.5, 1.0), 0.0),
])
print()
# the second relu is on at the reference and off at x, so the rules part ways
print(compare_rules(net, [2.0, 0.5, 1.0], [0.0, 0.0, 0.0]).table())
