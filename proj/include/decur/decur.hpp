#ifndef DECUR_DECUR_HPP
#define DECUR_DECUR_HPP

#include "decur/tensor.hpp"
#include "decur/random.hpp"
#include "decur/autodiff.hpp"
#include "decur/nn.hpp"
#include "decur/objective.hpp"
#include "decur/io.hpp"
#include "decur/synthdata.hpp"
#include "decur/optim.hpp"
#include "decur/config.hpp"
#include "decur/trainer.hpp"
#include "decur/evaluation.hpp"
#include "decur/explain.hpp"

#endif
