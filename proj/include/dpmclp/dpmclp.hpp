#pragma once

// Umbrella header.

#include "dpmclp/signal.hpp"
#include "dpmclp/stft.hpp"
#include "dpmclp/wav.hpp"
#include "dpmclp/dsp.hpp"
#include "dpmclp/room.hpp"
#include "dpmclp/shrinkage.hpp"
#include "dpmclp/mclp.hpp"
#include "dpmclp/beamformer.hpp"
#include "dpmclp/metrics.hpp"
#include "dpmclp/scenario.hpp"
#include "dpmclp/order_selection.hpp"
#include "dpmclp/container.hpp"
#include "dpmclp/config.hpp"
#include "dpmclp/experiment.hpp"

namespace dpmclp {
inline constexpr const char* kVersion = "0.1.0";
}
