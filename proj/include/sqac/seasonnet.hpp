#pragma once

#include <sqac/seasonnet/adam.hpp>
#include <sqac/seasonnet/model.hpp>
#include <sqac/seasonnet/persist.hpp>
#include <sqac/seasonnet/train.hpp>
#include <sqac/seasonnet/vocab.hpp>
