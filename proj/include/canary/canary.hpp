#pragma once

// Umbrella header for the Canary in-network allreduce simulator.

#include "canary/config.hpp"
#include "canary/experiment.hpp"
#include "canary/hash.hpp"
#include "canary/host_engine.hpp"
#include "canary/metrics.hpp"
#include "canary/packet.hpp"
#include "canary/ring.hpp"
#include "canary/shard.hpp"
#include "canary/simulation.hpp"
#include "canary/static_tree.hpp"
#include "canary/switch_engine.hpp"
#include "canary/topology.hpp"
#include "canary/workload.hpp"
