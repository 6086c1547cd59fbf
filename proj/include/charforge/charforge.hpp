#pragma once

#include "charforge/error.hpp"
#include "charforge/utf8.hpp"
#include "charforge/numerics.hpp"
#include "charforge/rng.hpp"
#include "charforge/corpus.hpp"
#include "charforge/model.hpp"
#include "charforge/checkpoint.hpp"
#include "charforge/training.hpp"
#include "charforge/generation.hpp"
#include "charforge/report.hpp"
