#pragma once

#include "fogml/adaptive.hpp"
#include "fogml/blockfl.hpp"
#include "fogml/datasets.hpp"
#include "fogml/distill.hpp"
#include "fogml/error.hpp"
#include "fogml/experiment.hpp"
#include "fogml/faug.hpp"
#include "fogml/federation.hpp"
#include "fogml/fedavg.hpp"
#include "fogml/gadmm.hpp"
#include "fogml/linalg.hpp"
#include "fogml/model.hpp"
#include "fogml/netsim.hpp"
#include "fogml/rng.hpp"
#include "fogml/summarize.hpp"
