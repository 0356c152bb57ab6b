use thiserror::Error;

use crate::model::{
    Action, ActionKind, Message, MessageCopy, MessageId, ModelError, Timestamp, UserId,
};
use crate::routing::{RoutingError, RoutingSchemeKind, RoutingState};
use crate::security::{
    sign_message, Credentials, Crl, SecurityContext, SecurityError, SignatureScheme,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// One device: credentials from signup, cached CRL, routing state, and the
/// local action journal awaiting cloud sync.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub routing: RoutingState,
    pub credentials: Credentials,
    pub crl: Crl,
    pub actions: Vec<Action>,
}

impl NodeState {
    pub fn new(credentials: Credentials, scheme: RoutingSchemeKind) -> Self {
        let owner = credentials.certificate.subject;
        Self {
            routing: RoutingState::new(owner, scheme, credentials.certificate.clone()),
            credentials,
            crl: Crl::default(),
            actions: Vec::new(),
        }
    }

    pub fn id(&self) -> UserId {
        self.routing.owner()
    }

    pub fn security<'a>(
        &'a self,
        scheme: &'a dyn SignatureScheme,
        now: Timestamp,
    ) -> SecurityContext<'a> {
        SecurityContext {
            scheme,
            root_public_key: &self.credentials.root_public_key,
            crl: &self.crl,
            now,
        }
    }

    /// Signs and stores the next post, journaling a Publish action.
    pub fn publish(
        &mut self,
        scheme: &dyn SignatureScheme,
        payload: Vec<u8>,
        at: Timestamp,
    ) -> Result<MessageId, NodeError> {
        let id = MessageId::new(self.id(), self.routing.next_own_number());
        let message = sign_message(
            scheme,
            Message::unsigned(id, at, payload),
            &self.credentials.keypair,
        )?;
        self.routing.publish(MessageCopy::original(message))?;
        self.record(ActionKind::Publish { message: id }, at);
        Ok(id)
    }

    pub fn follow(&mut self, followee: UserId, at: Timestamp) -> bool {
        let changed = self.routing.follow(followee);
        if changed {
            self.record(ActionKind::Follow { followee }, at);
        }
        changed
    }

    pub fn unfollow(&mut self, followee: UserId, at: Timestamp) -> bool {
        let changed = self.routing.unfollow(&followee);
        if changed {
            self.record(ActionKind::Unfollow { followee }, at);
        }
        changed
    }

    /// Uploads pending actions and refreshes the CRL. Returns how many
    /// actions were synced.
    pub fn cloud_sync(&mut self, crl: Crl) -> usize {
        self.crl = crl;
        let mut synced = 0;
        for action in self.actions.iter_mut().filter(|a| !a.synced) {
            action.synced = true;
            synced += 1;
        }
        synced
    }

    pub fn unsynced(&self) -> usize {
        self.actions.iter().filter(|a| !a.synced).count()
    }

    fn record(&mut self, kind: ActionKind, at: Timestamp) {
        self.actions.push(Action {
            kind,
            at,
            actor: self.id(),
            synced: false,
        });
    }
}
