"""Online HITS ranking of transaction databases and weighted rule mining."""

from .eigen import EigenEstimate, block_power_top2, dense_eig_oracle, eigengap
from .errors import EventError, NoModelError, OnlineHitsError, ParseError
from .graph import (DeltaMatrix, SparseMatrix, build_bipartite, build_item_graph,
                    delta_from_cells)
from .mining import (Rule, WeightedItemset, brute_force_mine, generate_rules, mine_frequent,
                     w_support)
from .online import (OnlineEngine, PerturbationBudget, RankSnapshot, accumulate,
                     rotation_bound)
from .txstore import (Add, Modify, Remove, Transaction, TransactionStore, apply_event,
                      load_basket_file, load_update_file)

__version__ = "0.1.0"
