#pragma once

#include "crae/betapool.hpp"
#include "crae/cf.hpp"
#include "crae/checkpoint.hpp"
#include "crae/common.hpp"
#include "crae/corpus.hpp"
#include "crae/drae.hpp"
#include "crae/eval.hpp"
#include "crae/linalg.hpp"
#include "crae/model.hpp"
#include "crae/rng.hpp"
#include "crae/rrn.hpp"
#include "crae/runconfig.hpp"
#include "crae/synth.hpp"
#include "crae/trainer.hpp"
