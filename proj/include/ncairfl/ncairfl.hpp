#pragma once

#include "ncairfl/bound.hpp"
#include "ncairfl/channel.hpp"
#include "ncairfl/data.hpp"
#include "ncairfl/dither_codec.hpp"
#include "ncairfl/errors.hpp"
#include "ncairfl/harness/config.hpp"
#include "ncairfl/harness/experiment.hpp"
#include "ncairfl/harness/metrics.hpp"
#include "ncairfl/model.hpp"
#include "ncairfl/problems.hpp"
#include "ncairfl/rng.hpp"
#include "ncairfl/schemes.hpp"
