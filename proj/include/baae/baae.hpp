#pragma once

#include "baae/adam.hpp"
#include "baae/checkpoint.hpp"
#include "baae/data.hpp"
#include "baae/error.hpp"
#include "baae/eval.hpp"
#include "baae/gradcheck.hpp"
#include "baae/graph.hpp"
#include "baae/io.hpp"
#include "baae/losses.hpp"
#include "baae/networks.hpp"
#include "baae/penalty.hpp"
#include "baae/rng.hpp"
#include "baae/tensor.hpp"
#include "baae/training.hpp"
