#pragma once

#include <sqac/completion_index.hpp>
#include <sqac/evalharness.hpp>
#include <sqac/loglab.hpp>
#include <sqac/ranker.hpp>
#include <sqac/seasonnet.hpp>
#include <sqac/service.hpp>
#include <sqac/synth.hpp>
#include <sqac/text.hpp>
