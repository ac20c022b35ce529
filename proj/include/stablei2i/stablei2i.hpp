#pragma once

// Umbrella header.

#include "stablei2i/core.hpp"
#include "stablei2i/manifest.hpp"
#include "stablei2i/templates.hpp"
#include "stablei2i/parser.hpp"
#include "stablei2i/rewards.hpp"
#include "stablei2i/metrics.hpp"
#include "stablei2i/image.hpp"
#include "stablei2i/synth.hpp"
#include "stablei2i/mcq.hpp"
#include "stablei2i/client.hpp"
#include "stablei2i/runner.hpp"
