#pragma once

#include "mind/rng.hpp"
#include "mind/core.hpp"
#include "mind/synth.hpp"
#include "mind/net.hpp"
#include "mind/estimator.hpp"
#include "mind/train.hpp"
#include "mind/metrics.hpp"
#include "mind/experiments.hpp"
#include "mind/config.hpp"
#include "mind/report.hpp"
#include "mind/selfcheck.hpp"
